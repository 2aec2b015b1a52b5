"""Partially separable objective ``sum_N f_i(U_i x) + sum_H |U_i x|^q``.

Element indices are global: nice elements come first (``0 .. n_nice-1``)
followed by the singular ones.  Every evaluation entry point takes an
optional :class:`EvaluationLedger` which is the only mutable object involved;
a :class:`Problem` itself never changes after construction.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .elements import SmoothElement, ZeroElement, singular_derivative
from .errors import EvaluationError, SingularDerivativeError

_log = logging.getLogger(__name__)

NORM_TOL = 1e-10
SPAN_TOL = 1e-8


class ElementMap:
    """Linear map ``x -> U_i x`` with unit operator norm."""

    def __init__(self, rows):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.ndim != 2 or rows.size == 0:
            raise ValueError("element map must be a non-empty 2-D array")
        norm = np.linalg.norm(rows, 2)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"element map must have operator norm 1, got {norm:.12g}")
        self.rows = rows
        self.rows.setflags(write=False)

    @property
    def element_dim(self):
        return self.rows.shape[0]

    @property
    def n(self):
        return self.rows.shape[1]

    def __call__(self, x):
        return self.rows @ x

    def __eq__(self, other):
        return isinstance(other, ElementMap) and np.array_equal(self.rows, other.rows)

    def __hash__(self):
        return hash(self.rows.tobytes())

    def __repr__(self):
        return f"ElementMap(shape={self.rows.shape})"


def unit_row(vector):
    """ElementMap for the single row ``vector / ||vector||``."""
    v = np.asarray(vector, dtype=float).reshape(1, -1)
    return ElementMap(v / np.linalg.norm(v))


def coordinate_map(n, j):
    """ElementMap selecting coordinate ``j`` of ``R^n``."""
    rows = np.zeros((1, n))
    rows[0, j] = 1.0
    return ElementMap(rows)


@dataclass
class EvaluationLedger:
    """Counts of objective evaluations and of derivative evaluations per order."""

    objective_evals: int = 0
    derivative_evals: Counter = field(default_factory=Counter)

    def count_objective(self):
        self.objective_evals += 1

    def count_derivative(self, order):
        self.derivative_evals[order] += 1

    def snapshot(self, p=None):
        orders = range(1, p + 1) if p is not None else sorted(self.derivative_evals)
        return {"objective": self.objective_evals,
                "derivatives": {int(j): int(self.derivative_evals.get(j, 0)) for j in orders}}

    @staticmethod
    def diff(after, before):
        keys = set(after["derivatives"]) | set(before["derivatives"])
        return {"objective": after["objective"] - before["objective"],
                "derivatives": {j: after["derivatives"].get(j, 0) - before["derivatives"].get(j, 0)
                                for j in sorted(keys)}}


class Problem:
    """Partially separable, convexly constrained problem.

    Parameters
    ----------
    n : int
        Ambient dimension.
    nice : list of (SmoothElement, ElementMap)
        Smooth elements ``f_i(U_i x)``.
    singular : list of ElementMap
        Maps ``U_i`` (single row each) of the ``|U_i x|^q`` terms.
    q : float
        Exponent in ``(0, 1)``.
    feasible : FeasibleSet
        Closed convex feasible set.
    x0 : array_like, optional
        Starting point carried with the instance.

    If the ranges of the nice ``U_i^T`` do not span ``R^n`` a zero element is
    appended whose map spans the missing subspace.
    """

    def __init__(self, n, nice, singular, q, feasible, x0=None, name="problem"):
        self.n = int(n)
        self.q = float(q)
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {q}")
        nice = [(elem, umap if isinstance(umap, ElementMap) else ElementMap(umap))
                for elem, umap in nice]
        singular = [umap if isinstance(umap, ElementMap) else ElementMap(umap) for umap in singular]
        for i, (elem, umap) in enumerate(nice):
            if not isinstance(elem, SmoothElement):
                raise TypeError(f"nice element {i} is not a SmoothElement")
            if umap.n != self.n or umap.element_dim != elem.dim:
                raise ValueError(f"nice element {i}: map shape {umap.rows.shape} "
                                 f"does not match (dim={elem.dim}, n={self.n})")
        for i, umap in enumerate(singular):
            if umap.n != self.n or umap.element_dim != 1:
                raise ValueError(f"singular element {i} must map R^{self.n} to R, "
                                 f"got shape {umap.rows.shape}")
        if feasible.n != self.n:
            raise ValueError(f"feasible set lives in R^{feasible.n}, problem in R^{self.n}")

        self.n_nice_raw = len(nice)
        missing = _missing_span(nice, self.n)
        if missing is not None:
            _log.info("nice maps do not span R^%d; appending a zero element of dim %d",
                      self.n, missing.shape[0])
            nice.append((ZeroElement(missing.shape[0]), ElementMap(missing)))
        self.nice = tuple(nice)
        self.singular = tuple(singular)
        self.feasible = feasible
        self.x0 = None if x0 is None else np.asarray(x0, dtype=float).reshape(self.n)
        self.name = name

        self._nice_rows = [umap.rows for _, umap in self.nice]
        self._h_rows = (np.vstack([u.rows for u in self.singular]) if self.singular
                        else np.zeros((0, self.n)))

    @property
    def n_nice(self):
        return len(self.nice)

    @property
    def n_singular(self):
        return len(self.singular)

    @property
    def repaired(self):
        return self.n_nice != self.n_nice_raw

    @property
    def nice_indices(self):
        return range(self.n_nice)

    @property
    def singular_indices(self):
        return range(self.n_nice, self.n_nice + self.n_singular)

    @property
    def all_indices(self):
        return range(self.n_nice + self.n_singular)

    @property
    def singular_rows(self):
        """Stacked ``U_i`` of the singular elements, shape ``(|H|, n)``."""
        return self._h_rows

    def element_map(self, i):
        if i < self.n_nice:
            return self.nice[i][1]
        return self.singular[i - self.n_nice]

    def is_singular(self, i):
        return i >= self.n_nice

    def singular_values_at(self, x):
        """``U_i x`` for every singular element (no ledger charge: linear maps only)."""
        return self._h_rows @ x

    def summary(self):
        return {"name": self.name, "n": self.n, "q": self.q, "n_nice": self.n_nice,
                "n_nice_raw": self.n_nice_raw, "n_singular": self.n_singular}

    def __repr__(self):
        return (f"Problem(name={self.name!r}, n={self.n}, |N|={self.n_nice} "
                f"(raw {self.n_nice_raw}), |H|={self.n_singular}, q={self.q})")


def _missing_span(nice, n):
    if nice:
        stacked = np.vstack([umap.rows for _, umap in nice])
    else:
        stacked = np.zeros((0, n))
    if stacked.shape[0] == 0:
        return np.eye(n)
    _, sv, vt = np.linalg.svd(stacked, full_matrices=True)
    rank = int(np.sum(sv > SPAN_TOL))
    if rank == n:
        return None
    return vt[rank:]


def _active(problem, active):
    if active is None:
        return list(problem.all_indices)
    return sorted(set(active))


def element_values(problem, x, ledger=None):
    """Values of all elements at ``x``; counts as one objective evaluation.

    Returns
    -------
    nice_vals : ndarray, shape (n_nice,)
    singular_vals : ndarray, shape (n_singular,)
    """
    x = np.asarray(x, dtype=float)
    if ledger is not None:
        ledger.count_objective()
    nice_vals = np.empty(problem.n_nice)
    for i, (elem, umap) in enumerate(problem.nice):
        v = elem.value(umap.rows @ x)
        if not np.isfinite(v):
            raise EvaluationError(f"element {i} ({elem.kind}) returned non-finite value {v}", element=i)
        nice_vals[i] = v
    singular_vals = np.abs(problem.singular_values_at(x)) ** problem.q
    return nice_vals, singular_vals


def eval_f(problem, x, active=None, ledger=None):
    """``sum_{i in active} f_i(U_i x)`` with ``|U_i x|^q`` for singular indices."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    nice_vals, singular_vals = element_values(problem, x, ledger)
    total = 0.0
    for i in _active(problem, active):
        total += nice_vals[i] if i < problem.n_nice else singular_vals[i - problem.n_nice]
    return float(total)


def eval_derivative(problem, x, order, active=None, ledger=None):
    """Per-element derivative tensors of order ``order`` at ``x``.

    Returns a dict mapping the global element index to the tensor
    ``nabla^order f_i(U_i x)`` of shape ``(n_i,) * order``.  Singular elements
    use the closed form of the derivatives of ``|t|^q``.
    """
    if order < 1:
        raise ValueError(f"derivative order must be >= 1, got {order}")
    x = np.asarray(x, dtype=float)
    idx = _active(problem, active)
    hvals = problem.singular_values_at(x)
    for i in idx:
        if i >= problem.n_nice and hvals[i - problem.n_nice] == 0.0:
            raise SingularDerivativeError(f"singular element {i} has U_i x = 0")
    if ledger is not None:
        ledger.count_derivative(order)
    out = {}
    for i in idx:
        if i < problem.n_nice:
            elem, umap = problem.nice[i]
            t = np.asarray(elem.derivative(umap.rows @ x, order), dtype=float)
            if not np.all(np.isfinite(t)):
                raise EvaluationError(f"element {i} returned a non-finite derivative of order {order}",
                                      element=i)
            out[i] = t
        else:
            t = hvals[i - problem.n_nice]
            out[i] = np.full((1,) * order, singular_derivative(t, problem.q, order))
    return out


def assemble_gradient(problem, first_derivs):
    """``sum_i U_i^T nabla f_i`` from the output of ``eval_derivative(order=1)``."""
    g = np.zeros(problem.n)
    for i, gi in first_derivs.items():
        g += problem.element_map(i).rows.T @ np.asarray(gi).reshape(-1)
    return g


def working_set(problem, x, eps):
    """``W(x, eps) = N  U  {i in H : |U_i x| > eps}`` as global indices."""
    hv = np.abs(problem.singular_values_at(x))
    return list(problem.nice_indices) + [problem.n_nice + j for j in np.flatnonzero(hv > eps)]
