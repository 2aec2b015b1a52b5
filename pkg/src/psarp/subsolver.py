"""Approximate minimization of the local model over the feasible subspace.

Projected gradient with Armijo backtracking on ``s -> m(x, s)`` restricted to
``{s in R : x + s in F}``.  A singular coordinate that reaches the band
``|U_i(x+s)| <= eps`` is frozen: later moves are confined to its kernel.
Trial steps that would carry a singular coordinate across zero are cut at
``eps/2`` on the original side, where the model is smallest along that
coordinate.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .activity import freeze
from .criticality import chi_model
from .errors import ContractViolation, StepFailure
from .feasible import project_shifted_subspace

_log = logging.getLogger(__name__)

# "doubling": grow the trial length x2 after an immediate success.
# "bb": Barzilai-Borwein length s^T s / s^T y from the last accepted move.
STEP_RULES = ("bb", "doubling")


@dataclass
class SubsolverConfig:
    eps: float
    q: float
    p: int
    r: float = 2.0
    theta: float = 100.0
    armijo: float = 1e-4
    max_inner: int = 5000
    step0: float = 1.0
    step_growth: float = 2.0
    step_max: float = 1e6
    chi_tol: float = 1e-10
    step_rule: str = "bb"

    def __post_init__(self):
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"unknown step rule {self.step_rule!r}; expected one of {STEP_RULES}")
        if self.r <= 1.0:
            raise ValueError(f"exponent r must exceed 1, got {self.r}")
        if self.theta < 0.0:
            raise ValueError(f"theta must be non-negative, got {self.theta}")


@dataclass
class StepResult:
    s: np.ndarray
    chi_m_value: float
    rhs_bound: float
    inner_iters: int
    freezes: list
    activity: object = field(repr=False)
    assembled: object = field(repr=False)
    model_at_zero: float = 0.0


def stopping_bound(x, s, h_rows_free, q, r, theta, p):
    """Right-hand side ``min[q^2/4 min_i |U_i(x+s)|^r, theta ||s||^p]``."""
    reg = theta * float(np.linalg.norm(s)) ** p
    if h_rows_free.shape[0] == 0:
        return reg
    sing = 0.25 * q * q * float(np.min(np.abs(h_rows_free @ (x + s)))) ** r
    return min(sing, reg)


def _crossing_fraction(cur, delta, eps):
    """Largest fraction of ``delta`` before any coordinate leaves its sign, stopping at eps/2."""
    new = cur + delta
    crossing = np.sign(new) != np.sign(cur)
    if not np.any(crossing):
        return 1.0
    c = cur[crossing]
    t = (np.sign(c) * 0.5 * eps - c) / delta[crossing]
    return float(np.min(t))


def compute_step(model, activity, x, fset, config):
    """Step ``s`` with ``x + s`` feasible, model decrease and the stopping rule satisfied."""
    x = np.asarray(x, dtype=float)
    problem = model.problem
    hrows = problem.singular_rows
    state = activity
    free = list(state.free_singular)
    frozen = []
    s = np.zeros(problem.n)
    asm = model.assemble(s, free, frozen)
    m0 = asm.value
    alpha = config.step0
    freezes = []
    crit = None
    bound = 0.0
    for it in range(config.max_inner + 1):
        basis = state.basis_R
        z = x + s
        crit = chi_model(asm.grad, z, fset, basis, tol=config.chi_tol)
        bound = stopping_bound(x, s, hrows[free], config.q, config.r, config.theta, config.p)
        if it > 0 and crit.value <= bound and asm.change < 0.0:
            return StepResult(s, crit.value, bound, it, freezes, state, asm, m0)
        if it == config.max_inner:
            break
        g_r = basis.T @ asm.grad
        first_try = True
        while True:
            d = basis @ project_shifted_subspace(fset, z, basis, -alpha * g_r)
            if not np.any(d):
                if crit.value <= config.chi_tol:
                    # projected-stationary: nothing left to gain in this subspace
                    if asm.change < 0.0:
                        return StepResult(s, crit.value, bound, it, freezes, state, asm, m0)
                raise ContractViolation("projected gradient step vanished with a non-stationary model")
            if free:
                frac = _crossing_fraction(hrows[free] @ z, hrows[free] @ d, config.eps)
                if frac < 1.0:
                    d = frac * d
            delta = model.change_between(s, d, free)
            if delta <= config.armijo * float(asm.grad @ d) and delta < 0.0:
                trial = model.assemble(s + d, free, frozen)
                break
            alpha *= 0.5
            first_try = False
            if alpha < 1e-30:
                raise StepFailure("line search failed to decrease the model", best_step=s, inner_iters=it)
        if config.step_rule == "bb":
            curv = float(d @ (trial.grad - asm.grad))
            alpha = min(float(d @ d) / curv, config.step_max) if curv > 0.0 else config.step_max
            alpha = max(alpha, 1e-12)
        elif first_try:
            alpha = min(alpha * config.step_growth, config.step_max)
        s = s + d
        asm = trial
        near = [j for j, v in zip(free, np.abs(hrows[free] @ (x + s))) if v <= config.eps] if free else []
        if near:
            for j in near:
                state = freeze(state, j)
                free.remove(j)
                frozen.append(j)
                freezes.append(j)
            _log.debug("froze singular elements %s at inner iteration %d", near, it)
            asm = model.assemble(s, free, frozen)
    raise StepFailure(f"step computation hit the inner cap of {config.max_inner} iterations "
                      f"(chi_m={crit.value:.3e}, bound={bound:.3e})", best_step=s,
                      inner_iters=config.max_inner)
