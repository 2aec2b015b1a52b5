"""Near-singular index sets ``C``, subspace ``R`` and working set ``W``.

Singular indices are stored as positions ``0 .. |H|-1`` within the singular
list of the problem; ``work_W`` reports global element indices.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

NULL_TOL = 1e-12


def null_space_basis(rows, n):
    """Orthonormal basis (columns) of ``{d : rows @ d = 0}``.

    Coordinate rows give a coordinate basis so that box projections restricted
    to the subspace stay exact.
    """
    rows = np.asarray(rows, dtype=float).reshape(-1, n)
    if rows.shape[0] == 0:
        return np.eye(n)
    nz = np.abs(rows) > 0.0
    if np.all(nz.sum(axis=1) == 1):
        used = np.flatnonzero(nz.any(axis=0))
        keep = np.setdiff1d(np.arange(n), used)
        return np.eye(n)[:, keep]
    _, sv, vt = np.linalg.svd(rows, full_matrices=True)
    rank = int(np.sum(sv > NULL_TOL))
    return vt[rank:].T.copy()


@dataclass
class ActivityState:
    """``C(x, eps)``, the frozen set and the derived ``R`` and ``W``."""

    eps: float
    n: int
    n_nice: int
    n_singular: int
    active_C: frozenset
    frozen: frozenset = frozenset()
    basis_R: np.ndarray = field(default=None, repr=False)
    h_rows: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.basis_R is None:
            self.basis_R = self._basis()

    def _basis(self):
        idx = sorted(self.active_C | self.frozen)
        return null_space_basis(self.h_rows[idx], self.n)

    @property
    def blocked(self):
        """Singular indices whose maps the step may no longer move."""
        return self.active_C | self.frozen

    @property
    def dim_R(self):
        return self.basis_R.shape[1]

    @property
    def free_singular(self):
        """Singular positions still in the working set."""
        return sorted(set(range(self.n_singular)) - self.blocked)

    @property
    def work_W(self):
        return list(range(self.n_nice)) + [self.n_nice + j for j in self.free_singular]


def classify(problem, x, eps):
    """Activity state at ``x``: ``C = {i in H : |U_i x| <= eps}``."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    hv = np.abs(problem.singular_values_at(np.asarray(x, dtype=float)))
    active = frozenset(int(j) for j in np.flatnonzero(hv <= eps))
    return ActivityState(eps=float(eps), n=problem.n, n_nice=problem.n_nice,
                         n_singular=problem.n_singular, active_C=active,
                         h_rows=problem.singular_rows)


def freeze(state, j):
    """Return a new state with singular position ``j`` frozen.

    Freezing an index that is already blocked returns the state unchanged.
    """
    if not 0 <= j < state.n_singular:
        raise ContractViolation(f"cannot freeze {j}: not a singular element position")
    if j in state.blocked:
        return state
    new = ActivityState(eps=state.eps, n=state.n, n_nice=state.n_nice,
                        n_singular=state.n_singular, active_C=state.active_C,
                        frozen=state.frozen | {j}, h_rows=state.h_rows)
    if new.dim_R > state.dim_R:
        raise ContractViolation("freezing increased the dimension of R")
    return new
