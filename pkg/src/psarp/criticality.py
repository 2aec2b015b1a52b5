"""First-order criticality measure over a feasible subspace.

Both measures reduce to

    chi = | min { g^T d : x + d in F, d in span(B), ||d|| <= 1 } |

which is solved through its Lagrangian dual in the ball multiplier: for
``lam > 0`` the minimizer of ``g^T d + lam ||d||^2`` over the constraint set is
a projection of ``-g / (2 lam)``.  Bisection on ``log(lam)`` drives the
primal/dual gap below ``tol``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ChiSolverError
from .feasible import shifted_projector

LAMBDA_MIN = 1e-12
LAMBDA_MAX = 1e12
MAX_BISECTIONS = 200


@dataclass
class ChiResult:
    value: float
    d_star: np.ndarray
    lam: float
    gap: float


def chi(g, x, fset, basis, tol=1e-8):
    """Criticality measure of gradient ``g`` at ``x`` over ``x + span(basis)``."""
    g = np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    basis = np.asarray(basis, dtype=float)
    n = x.size
    if basis.shape[1] == 0:
        return ChiResult(0.0, np.zeros(n), 0.0, 0.0)
    c = basis.T @ g
    cnorm = float(np.linalg.norm(c))
    if cnorm == 0.0:
        return ChiResult(0.0, np.zeros(n), 0.0, 0.0)

    project = shifted_projector(fset, x, basis)

    def solve(lam):
        y = project(-c / (2.0 * lam))
        return y, float(np.linalg.norm(y))

    y, ny = solve(LAMBDA_MIN)
    if ny <= 1.0:
        primal = float(c @ y)
        gap = LAMBDA_MIN * (1.0 - ny * ny)
        return _result(basis, y, primal, 0.0, gap)

    best_primal, best_y, best_lam = np.inf, None, None
    best_dual = -np.inf
    lo, hi = math.log(LAMBDA_MIN), math.log(min(max(cnorm / 2.0, LAMBDA_MIN), LAMBDA_MAX))
    if hi <= lo:
        hi = lo + 1.0
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        lam = math.exp(mid)
        y, ny = solve(lam)
        val = float(c @ y)
        dual = val + lam * (ny * ny - 1.0)
        y_feas = y / max(1.0, ny)
        primal = float(c @ y_feas)
        if primal < best_primal:
            best_primal, best_y, best_lam = primal, y_feas, lam
        best_dual = max(best_dual, dual)
        if best_primal - best_dual <= tol:
            break
        if ny > 1.0:
            lo = mid
        else:
            hi = mid
    gap = best_primal - best_dual
    if best_y is None or gap > max(tol, 1e-6 * cnorm):
        raise ChiSolverError(f"chi bisection ended with gap {gap:.3e} > tol {tol:.1e}",
                             diagnostics={"gap": gap, "lam_bracket": (math.exp(lo), math.exp(hi)),
                                          "primal": best_primal, "dual": best_dual})
    return _result(basis, best_y, best_primal, best_lam, gap)


def _result(basis, y, primal, lam, gap):
    return ChiResult(max(0.0, -primal), basis @ y, lam, max(gap, 0.0))


def chi_model(model_gradient, x_plus_s, fset, basis_plus, tol=1e-8):
    """Criticality of the model gradient at the trial point ``x + s``."""
    return chi(model_gradient, x_plus_s, fset, basis_plus, tol)
