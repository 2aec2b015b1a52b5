"""Reading and writing ``psarp-problem/1`` problem descriptors.

A descriptor is a JSON object::

    {"schema": "psarp-problem/1", "name": "...", "n": 3, "q": 0.5,
     "x0": [...] | null, "seed": 7 | null,
     "elements": [{"set": "N", "kind": "quadratic", "params": {...}, "U": [[...]]},
                  {"set": "H", "U": [[...]]}],
     "feasible": {"kind": "box", "lo": [...], "hi": [...]},
     "solver": {...}}

Singular (``"H"``) entries carry only their single-row map.  Infinite box or
slab bounds are written as ``null``.
"""

import hashlib
import json

import jsonschema
import numpy as np

from .elements import ELEMENT_KINDS, element_from_params
from .errors import ProblemParseError
from .feasible import set_from_descriptor
from .problem import ElementMap, Problem

SCHEMA_ID = "psarp-problem/1"

_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}
_VEC = {"type": "array", "items": _NUM}
_MATRIX = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _NUM}}

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$id": SCHEMA_ID,
    "title": "Partially separable problem with |U_i x|^q terms",
    "type": "object",
    "required": ["schema", "n", "q", "elements", "feasible"],
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "name": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "q": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "x0": {"oneOf": [_VEC, {"type": "null"}]},
        "seed": {"type": ["integer", "null"]},
        "elements": {"type": "array", "items": {"$ref": "#/$defs/element"}},
        "feasible": {"$ref": "#/$defs/set"},
        "solver": {"type": "object"},
        "reference": {"type": "object"},
        "generator": {"type": "object"},
    },
    "additionalProperties": False,
    "$defs": {
        "element": {
            "type": "object",
            "required": ["set", "U"],
            "properties": {
                "set": {"enum": ["N", "H"]},
                "kind": {"enum": sorted(ELEMENT_KINDS)},
                "params": {"type": "object"},
                "U": _MATRIX,
            },
            "additionalProperties": False,
            "if": {"properties": {"set": {"const": "N"}}},
            "then": {"required": ["kind"]},
            "else": {"properties": {"U": {"maxItems": 1}}},
        },
        "set": {
            "type": "object",
            "required": ["kind"],
            "oneOf": [
                {"properties": {"kind": {"const": "free"}, "n": {"type": "integer"}}},
                {"properties": {"kind": {"const": "box"},
                                "lo": {"type": "array", "items": _NUM_OR_NULL},
                                "hi": {"type": "array", "items": _NUM_OR_NULL}},
                 "required": ["lo", "hi"]},
                {"properties": {"kind": {"const": "ball"}, "center": _VEC,
                                "radius": {"type": "number", "minimum": 0}},
                 "required": ["center", "radius"]},
                {"properties": {"kind": {"enum": ["affine-slab", "slab"]}, "a": _VEC,
                                "lo": _NUM_OR_NULL, "hi": _NUM_OR_NULL},
                 "required": ["a"]},
                {"properties": {"kind": {"enum": ["halfspace-intersection", "halfspaces"]},
                                "A": _MATRIX, "b": _VEC},
                 "required": ["A", "b"]},
                {"properties": {"kind": {"enum": ["intersection", "cartesian-product", "product"]},
                                "parts": {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/set"}}},
                 "required": ["parts"]},
            ],
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)


def validate_descriptor(desc):
    """Raise :class:`ProblemParseError` naming the first offending location."""
    errors = sorted(_VALIDATOR.iter_errors(desc), key=lambda e: (len(e.absolute_path), list(map(str, e.path))))
    if errors:
        err = errors[0]
        loc = "/" + "/".join(str(p) for p in err.absolute_path)
        raise ProblemParseError(f"invalid {SCHEMA_ID} descriptor at {loc}: {err.message}", location=loc)


def problem_from_descriptor(desc):
    """Validate ``desc`` and build the :class:`Problem` it describes."""
    validate_descriptor(desc)
    n = int(desc["n"])
    nice, singular = [], []
    for k, entry in enumerate(desc["elements"]):
        loc = f"/elements/{k}"
        try:
            umap = ElementMap(entry["U"])
            if umap.n != n:
                raise ValueError(f"map has {umap.n} columns, problem has n={n}")
            if entry["set"] == "H":
                singular.append(umap)
            else:
                elem = element_from_params(entry["kind"], entry.get("params", {}), umap.element_dim)
                if elem.dim != umap.element_dim:
                    raise ValueError(f"element dimension {elem.dim} does not match map rows {umap.element_dim}")
                nice.append((elem, umap))
        except (TypeError, ValueError, KeyError) as exc:
            raise ProblemParseError(f"invalid element at {loc}: {exc}", location=loc) from exc
    try:
        fset = set_from_descriptor(desc["feasible"], n)
        if fset.n != n:
            raise ValueError(f"feasible set has dimension {fset.n}, problem has n={n}")
        return Problem(n, nice, singular, desc["q"], fset, x0=desc.get("x0"), name=desc.get("name", "problem"))
    except (TypeError, ValueError, KeyError) as exc:
        raise ProblemParseError(f"invalid problem: {exc}", location="/") from exc


def problem_to_descriptor(problem, seed=None, **extra):
    """Descriptor for ``problem``; span-repair elements are left out (they are rebuilt)."""
    elements = []
    for elem, umap in problem.nice[: problem.n_nice_raw]:
        entry = {"set": "N", "kind": elem.kind, "params": elem.params(), "U": umap.rows.tolist()}
        if elem.kind == "zero":
            entry["params"] = {"dim": elem.dim}
        elements.append(entry)
    for umap in problem.singular:
        elements.append({"set": "H", "U": umap.rows.tolist()})
    desc = {
        "schema": SCHEMA_ID,
        "name": problem.name,
        "n": problem.n,
        "q": problem.q,
        "x0": None if problem.x0 is None else problem.x0.tolist(),
        "seed": seed,
        "elements": elements,
        "feasible": problem.feasible.to_descriptor(),
    }
    desc.update({k: v for k, v in extra.items() if v is not None})
    return desc


def canonical_json(desc):
    return json.dumps(desc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(desc):
    """SHA-256 of the canonical JSON encoding."""
    return hashlib.sha256(canonical_json(desc).encode()).hexdigest()


def load_descriptor(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ProblemParseError(f"{path}: not valid JSON ({exc.msg})", location=f"line {exc.lineno}") from exc


def save_descriptor(desc, path):
    with open(path, "w") as fh:
        json.dump(desc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def problems_equal(a, b):
    """Structural equality of two problems (elements, maps, set, start)."""
    if (a.n, a.q, a.n_nice, a.n_singular) != (b.n, b.q, b.n_nice, b.n_singular):
        return False
    if any(ea != eb or ua != ub for (ea, ua), (eb, ub) in zip(a.nice, b.nice)):
        return False
    if any(ua != ub for ua, ub in zip(a.singular, b.singular)):
        return False
    if (a.x0 is None) != (b.x0 is None) or (a.x0 is not None and not np.array_equal(a.x0, b.x0)):
        return False
    return a.feasible == b.feasible
