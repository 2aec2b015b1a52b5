"""Instances, generators and epsilon sweeps.

Generators produce ``psarp-problem/1`` descriptors, so every instance can be
written to disk and rebuilt bit for bit.  The environment variable
``PSARP_SEED`` overrides the seed of a descriptor or generator call.
"""

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .driver import SolverConfig, expected_ledger, solve
from .errors import ConfigError, PsarpError, SolveFailure
from .problemfile import SCHEMA_ID, digest, load_descriptor, problem_from_descriptor

_log = logging.getLogger(__name__)

SEED_ENV = "PSARP_SEED"


@dataclass
class Instance:
    name: str
    problem: object
    descriptor: dict
    overrides: dict = field(default_factory=dict)
    reference: dict = None

    @property
    def digest(self):
        return digest(self.descriptor)

    def config(self, **kw):
        """SolverConfig from the instance overrides, updated with ``kw``."""
        return SolverConfig(**{**self.overrides, **kw})


def _seed(seed):
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        return int(env)
    return seed


def _box(lo, hi):
    enc = lambda v: [None if math.isinf(t) else float(t) for t in v]  # noqa: E731
    return {"kind": "box", "lo": enc(lo), "hi": enc(hi)}


def _unit(n, j):
    row = [0.0] * n
    row[j] = 1.0
    return [row]


def _descriptor(name, n, q, elements, feasible, x0, seed, generator=None, reference=None, solver=None):
    desc = {"schema": SCHEMA_ID, "name": name, "n": n, "q": q, "x0": x0, "seed": seed,
            "elements": elements, "feasible": feasible}
    if generator is not None:
        desc["generator"] = generator
    if reference is not None:
        desc["reference"] = reference
    if solver:
        desc["solver"] = solver
    return desc


def gen_toy1d(seed=None):
    """``x^2`` on ``[-1, 1]`` from ``x0 = 0.8``; minimizer 0."""
    el = [{"set": "N", "kind": "quadratic", "params": {"Q": [[2.0]], "c": [0.0], "d": 0.0}, "U": [[1.0]]}]
    return _descriptor("toy1d", 1, 0.5, el, _box([-1.0], [1.0]), [0.8], seed,
                       generator={"name": "toy1d"}, reference={"x": [0.0], "f": 0.0})


def gen_singular1d(q=0.5, x0=0.5, seed=None):
    """``|x|^q`` on ``[-1, 1]`` plus a zero smooth element; minimizer 0."""
    el = [{"set": "N", "kind": "zero", "params": {"dim": 1}, "U": [[1.0]]},
          {"set": "H", "U": [[1.0]]}]
    return _descriptor("singular1d", 1, float(q), el, _box([-1.0], [1.0]), [float(x0)], seed,
                       generator={"name": "singular1d", "q": q, "x0": x0}, reference={"x": [0.0], "f": 0.0})


def gen_lq_regression(n=20, m=30, q=0.5, seed=7, lam=1.0, bound=10.0, shift=0.0, shift_every=3,
                      sparsity=0.25, noise=0.01):
    """Sparse least squares ``sum_i (a_i^T x - b_i)^2 + lam sum_j |x_j|^q`` on a box.

    ``lam`` is folded in by the change of variables ``x = c y`` with
    ``c = lam^(-1/q)``, which turns ``lam |x_j|^q`` into ``|y_j|^q`` exactly.
    The descriptor is written in ``y``; the box ``[-bound, bound]^n`` (in
    ``x``) is scaled accordingly.  A positive ``shift`` moves the interval of
    every ``shift_every``-th coordinate to ``[shift, 2 bound + shift]`` so
    that it no longer contains 0.
    """
    if lam <= 0:
        raise ConfigError("lam must be positive")
    seed = _seed(seed)
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    x_true = np.where(rng.random(n) < sparsity, rng.uniform(-2.0, 2.0, n), 0.0)
    b = A @ x_true + noise * rng.standard_normal(m)
    c = lam ** (-1.0 / q)
    lo = np.full(n, -bound)
    hi = np.full(n, bound)
    if shift > 0:
        idx = np.arange(0, n, shift_every)
        lo[idx] = shift
        hi[idx] = 2.0 * bound + shift
    x0 = np.clip(rng.choice([-1.0, 1.0], n) * rng.uniform(0.5, 1.5, n), lo, hi)
    elements = []
    for i in range(m):
        na = float(np.linalg.norm(A[i]))
        elements.append({"set": "N", "kind": "residual-power",
                         "params": {"w": [c * na], "b": float(b[i]), "power": 2},
                         "U": [(A[i] / na).tolist()]})
    for j in range(n):
        elements.append({"set": "H", "U": _unit(n, j)})
    gen = {"name": "lq-regression", "n": n, "m": m, "q": q, "seed": seed, "lam": lam, "bound": bound,
           "shift": shift, "shift_every": shift_every, "scale": c}
    return _descriptor(f"lq-regression-n{n}-m{m}-q{q}-s{seed}", n, float(q), elements,
                       _box(lo / c, hi / c), (x0 / c).tolist(), seed, generator=gen)


def gen_chained(n=10, seed=0, bound=5.0):
    """Chained convex quadratics on consecutive coordinate pairs (no singular terms)."""
    seed = _seed(seed)
    rng = np.random.default_rng(seed)
    elements = []
    for j in range(n - 1):
        M = rng.standard_normal((2, 2))
        Q = M @ M.T + 0.5 * np.eye(2)
        rows = np.zeros((2, n))
        rows[0, j] = rows[1, j + 1] = 1.0
        elements.append({"set": "N", "kind": "quadratic",
                         "params": {"Q": Q.tolist(), "c": rng.standard_normal(2).tolist(), "d": 0.0},
                         "U": rows.tolist()})
    x0 = rng.uniform(-bound, bound, n).tolist()
    return _descriptor(f"chained-n{n}-s{seed}", n, 0.5, elements, _box([-bound] * n, [bound] * n), x0,
                       seed, generator={"name": "chained", "n": n, "seed": seed, "bound": bound})


def gen_rosenbrock(n=6, alpha=100.0, bound=3.0, seed=None):
    """Chained Rosenbrock couplings on a box from the classical start ``(-1.2, 1, ...)``."""
    elements = []
    for j in range(n - 1):
        rows = np.zeros((2, n))
        rows[0, j] = rows[1, j + 1] = 1.0
        elements.append({"set": "N", "kind": "rosenbrock", "params": {"alpha": alpha}, "U": rows.tolist()})
    x0 = [-1.2 if j % 2 == 0 else 1.0 for j in range(n)]
    return _descriptor(f"rosenbrock-n{n}", n, 0.5, elements, _box([-bound] * n, [bound] * n), x0, seed,
                       generator={"name": "rosenbrock", "n": n, "alpha": alpha, "bound": bound},
                       reference={"x": [1.0] * n, "f": 0.0})


GENERATORS = {
    "toy1d": gen_toy1d,
    "singular1d": gen_singular1d,
    "lq-regression": gen_lq_regression,
    "chained": gen_chained,
    "rosenbrock": gen_rosenbrock,
}


def parse_generator_spec(text):
    """``"lq-regression n=20 m=30 q=0.5 seed=7"`` -> ``("lq-regression", {...})``."""
    name, *args = text.split()
    kwargs = {}
    for arg in args:
        key, _, val = arg.partition("=")
        if not _:
            raise ConfigError(f"generator argument {arg!r} is not key=value")
        try:
            num = float(val)
            kwargs[key.replace("-", "_")] = int(num) if num.is_integer() and "." not in val and "e" not in val else num
        except ValueError:
            kwargs[key.replace("-", "_")] = val
    return name, kwargs


def build_instance(source, seed=None, **kwargs):
    """Instance from a descriptor dict, a descriptor file path, or a generator name.

    Generator arguments may be embedded in ``source`` (``"chained n=5"``) or
    passed as keywords.
    """
    if isinstance(source, dict):
        desc = dict(source)
    elif isinstance(source, str) and source.split()[0] in GENERATORS:
        name, embedded = parse_generator_spec(source)
        kw = {**embedded, **kwargs}
        if seed is not None:
            kw["seed"] = seed
        desc = GENERATORS[name](**kw)
    else:
        desc = load_descriptor(source)
    if desc.get("seed") is not None or os.environ.get(SEED_ENV):
        desc["seed"] = _seed(desc.get("seed"))
    problem = problem_from_descriptor(desc)
    return Instance(name=desc.get("name", "problem"), problem=problem, descriptor=desc,
                    overrides=dict(desc.get("solver", {})), reference=desc.get("reference"))


@dataclass
class SweepPoint:
    eps: float
    status: str
    succ_iters: int
    total_iters: int
    f_evals: int
    derivative_evals: dict
    final_chi: float
    final_f: float
    trace_counts: dict
    error: str = None

    @property
    def g_evals(self):
        return self.derivative_evals.get(1, 0)


@dataclass
class SweepReport:
    instance: str
    p: int
    points: list
    slope: float = None

    @property
    def consistent(self):
        """Ledger counts agree with the counts replayed from each trace.

        Failed points are skipped: their trace stops before the iteration
        that raised, while the ledger already counts its evaluations.
        """
        return all(pt.trace_counts == {"objective": pt.f_evals, "derivatives": pt.derivative_evals}
                   for pt in self.points if pt.status != "failed")

    def columns(self):
        return (["eps", "succ_iters", "total_iters", "f_evals", "g_evals"]
                + [f"d{j}_evals" for j in range(2, self.p + 1)] + ["final_chi", "final_f", "status"])

    def rows(self):
        for pt in self.points:
            yield ([repr(pt.eps), pt.succ_iters, pt.total_iters, pt.f_evals, pt.g_evals]
                   + [pt.derivative_evals.get(j, 0) for j in range(2, self.p + 1)]
                   + [repr(pt.final_chi), repr(pt.final_f), pt.status])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        for row in self.rows():
            w.writerow(row)
        return buf.getvalue()


def fit_slope(eps_values, succ_iters):
    """Least-squares slope of ``log(succ)`` against ``log(1/eps)``; ``None`` if undetermined.

    Zero counts enter as one iteration so the logarithm stays finite.
    """
    eps_values = np.asarray(eps_values, dtype=float)
    if np.unique(eps_values).size < 2:
        return None
    xs = np.log(1.0 / eps_values)
    ys = np.log(np.maximum(np.asarray(succ_iters, dtype=float), 1.0))
    return float(np.polyfit(xs, ys, 1)[0])


def _point(eps, result_or_trace, ledger, p, status, x_chi, x_f, error=None):
    trace = result_or_trace
    snap = ledger.snapshot(p) if ledger is not None else {"objective": 0, "derivatives": {}}
    return SweepPoint(eps=eps, status=status,
                      succ_iters=sum(r.outcome == "successful" for r in trace),
                      total_iters=sum(r.outcome in ("successful", "unsuccessful") for r in trace),
                      f_evals=snap["objective"], derivative_evals=snap["derivatives"],
                      final_chi=x_chi, final_f=x_f, trace_counts=expected_ledger(trace, p) if trace else snap,
                      error=error)


def run_sweep(instance, eps_list, config=None):
    """Independent solves for each ``eps`` from the instance start point."""
    config = config or instance.config()
    points = []
    for eps in eps_list:
        if not 0.0 < eps <= 1.0:
            raise ConfigError(f"sweep eps must lie in (0, 1], got {eps}")
        cfg = replace(config, eps=float(eps))
        try:
            res = solve(instance.problem, cfg)
            points.append(_point(eps, res.trace, res.ledger, cfg.p, res.status, res.final_chi, res.final_f))
        except SolveFailure as exc:
            _log.warning("solve failed at eps=%g: %s", eps, exc)
            last = exc.trace[-1] if exc.trace else None
            snap = exc.ledger.snapshot(cfg.p) if getattr(exc, "ledger", None) else None
            pt = SweepPoint(eps=eps, status="failed", succ_iters=sum(r.outcome == "successful" for r in exc.trace),
                            total_iters=sum(r.outcome in ("successful", "unsuccessful") for r in exc.trace),
                            f_evals=snap["objective"] if snap else 0,
                            derivative_evals={int(k): v for k, v in snap["derivatives"].items()} if snap else {},
                            final_chi=last.chi if last else math.nan, final_f=last.f if last else math.nan,
                            trace_counts=expected_ledger(exc.trace, cfg.p), error=str(exc))
            points.append(pt)
        except PsarpError as exc:
            _log.warning("solve rejected at eps=%g: %s", eps, exc)
            points.append(SweepPoint(eps=eps, status="failed", succ_iters=0, total_iters=0, f_evals=0,
                                     derivative_evals={}, final_chi=math.nan, final_f=math.nan,
                                     trace_counts={"objective": 0, "derivatives": {}}, error=str(exc)))
    ok = [pt for pt in points if pt.status == "terminated"]
    slope = fit_slope([pt.eps for pt in ok], [pt.succ_iters for pt in ok]) if ok else None
    return SweepReport(instance=instance.name, p=config.p, points=points, slope=slope)
