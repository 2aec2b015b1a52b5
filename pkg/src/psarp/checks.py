"""Randomized self-checks of the models and the criticality measure.

Each suite draws its samples from a seeded generator and compares the
library against an independent reference: the exact function ``|x+s|^q``,
central finite differences, or a brute-force grid over the unit ball.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .activity import null_space_basis
from .criticality import chi
from .feasible import Ball, Box
from .models import TaylorData, eval_nice_model, eval_true_h, eval_two_sided

_log = logging.getLogger(__name__)

P_GRID = (1, 3, 5)
Q_GRID = (0.1, 0.5, 0.9)


@dataclass
class CheckResult:
    name: str
    passed: bool
    samples: int
    worst: float
    tolerance: float
    elapsed: float
    details: dict = field(default_factory=dict)

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.name}: {self.samples} samples, worst={self.worst:.3e} "
                f"(tol {self.tolerance:.1e}), {self.elapsed:.2f}s")


def _nonzero(rng, size, lo=1e-3, hi=2.0):
    return rng.choice([-1.0, 1.0], size) * rng.uniform(lo, hi, size)


def overestimation(samples=10_000, seed=0, tol=1e-10, p_grid=P_GRID, q_grid=Q_GRID):
    """Two-sided model ``>= |x+s|^q - tol`` on random ``(x, s)``, all sign patterns."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = -np.inf
    per = {}
    for p in p_grid:
        for q in q_grid:
            x = _nonzero(rng, samples)
            xs = _nonzero(rng, samples, hi=3.0)
            m, _ = eval_two_sided(x, xs - x, q, p)
            gap = np.abs(xs) ** q - m
            per[(p, q)] = float(gap.max())
            worst = max(worst, float(gap.max()))
    return CheckResult("overestimate", worst <= tol, samples * len(p_grid) * len(q_grid), worst, tol,
                       time.perf_counter() - t0, {"max_violation": per})


def gradient_domination(samples=10_000, seed=1, eps=1e-3, p_grid=(1, 3, 5), q_grid=Q_GRID):
    """``|grad m(x, s)| > q/2 |grad m(x, 0)|`` for ``|x| in (eps, 1]``, ``|x+s| >= eps``.

    ``worst`` is the smallest ratio ``|grad m(x, s)| / (q/2 q |x|^(q-1))``; it must exceed 1.
    The sign of the gradient must also agree with ``sign(x + s)``.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = np.inf
    sign_mismatches = 0
    for p in p_grid:
        if p % 2 == 0:
            raise ValueError("gradient domination needs odd p")
        for q in q_grid:
            x = rng.choice([-1.0, 1.0], samples) * rng.uniform(eps, 1.0, samples)
            x[x == eps] = 1.0
            xs = _nonzero(rng, samples, lo=eps, hi=3.0)
            _, g = eval_two_sided(x, xs - x, q, p)
            ratio = np.abs(g) / (0.5 * q * q * np.abs(x) ** (q - 1.0))
            worst = min(worst, float(ratio.min()))
            sign_mismatches += int(np.sum(np.sign(g) != np.sign(xs)))
    return CheckResult("gradient-domination", worst > 1.0 and sign_mismatches == 0,
                       samples * len(p_grid) * len(q_grid), worst, 1.0, time.perf_counter() - t0,
                       {"sign_mismatches": sign_mismatches})


def _fd(fun, s, h):
    return (fun(s + h) - fun(s - h)) / (2.0 * h)


def model_gradients(samples=1000, seed=2, tol=1e-5, p=3, q=0.5):
    """Central finite differences against analytic gradients for all three model kinds.

    Samples stay at least ``0.05`` away from ``x = 0`` and ``x + s = 0``; the
    step is ``1e-6`` times the local scale.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    errs = {}
    # two-sided and true singular models
    x = _nonzero(rng, samples, lo=0.05, hi=2.0)
    xs = _nonzero(rng, samples, lo=0.05, hi=2.0)
    s = xs - x
    h = 1e-6 * np.minimum(np.abs(xs), 1.0)
    for kind, fun in (("two-sided", lambda ss: eval_two_sided(x, ss, q, p)),
                      ("true", lambda ss: eval_true_h(x, ss, q))):
        _, g = fun(s)
        fd = _fd(lambda ss: fun(ss)[0], s, h)
        rel = np.abs(g - fd) / np.maximum(np.abs(g), 1.0)
        errs[kind] = float(rel.max())
    # regularized Taylor model of a nice element (dimension 3)
    worst_nice = 0.0
    dim = 3
    for _ in range(samples):
        tensors = []
        for j in range(1, p + 1):
            t = rng.standard_normal((dim,) * j)
            # symmetrize
            t = sum(np.transpose(t, perm) for perm in _perms(j)) / len(_perms(j))
            tensors.append(t)
        data = TaylorData(float(rng.standard_normal()), tensors, float(rng.uniform(0.1, 10.0)))
        si = rng.standard_normal(dim)
        _, g = eval_nice_model(data, si)
        fd = np.array([_fd(lambda t: eval_nice_model(data, si + (t - si[k]) * np.eye(dim)[k])[0], si[k], 1e-6)
                       for k in range(dim)])
        worst_nice = max(worst_nice, float(np.max(np.abs(g - fd)) / max(np.linalg.norm(g), 1.0)))
    errs["taylor"] = worst_nice
    worst = max(errs.values())
    return CheckResult("model-gradients", worst <= tol, 3 * samples, worst, tol, time.perf_counter() - t0,
                       {"max_relative_error": errs})


def _perms(j):
    from itertools import permutations

    return list(permutations(range(j)))


def unit_ball_grid(k, step=1e-3):
    """Grid points of spacing ``step`` inside the closed unit ball of ``R^k`` (k = 1, 2)."""
    axis = np.arange(-1.0, 1.0 + step / 2, step)
    if k == 1:
        coef = axis[:, None]
    elif k == 2:
        a, b = np.meshgrid(axis, axis, indexing="ij")
        coef = np.column_stack([a.ravel(), b.ravel()])
    else:
        raise ValueError("grid oracle supports subspaces of dimension 1 or 2")
    return coef[np.sum(coef * coef, axis=1) <= 1.0 + 1e-12]


def grid_chi(g, x, fset, basis, step=1e-3, coef=None):
    """Brute-force ``|min g^T d|`` over a grid of ``d = basis @ c`` with ``||c|| <= 1``.

    The grid misses the true minimizer by at most ``step`` per axis, so the
    result is within about ``sqrt(k) ||g|| step`` of the exact value.
    """
    if coef is None:
        coef = unit_ball_grid(basis.shape[1], step)
    pts = x + coef @ basis.T
    ok = _members(fset, pts)
    vals = coef[ok] @ (basis.T @ g)
    return max(0.0, -float(vals.min())) if vals.size else 0.0


def _members(fset, pts):
    if isinstance(fset, Box):
        return np.all((pts >= fset.lo - 1e-12) & (pts <= fset.hi + 1e-12), axis=1)
    if isinstance(fset, Ball):
        return np.linalg.norm(pts - fset.center, axis=1) <= fset.radius + 1e-12
    return np.array([fset.contains(p, tol=1e-12) for p in pts])


def chi_oracle(samples=200, seed=3, tol=5e-3, step=1e-3):
    """``chi`` against the grid oracle on 1-D and 2-D boxes and balls.

    Gradient norms are drawn from ``[0.1, 2]`` so the grid error stays below
    ``3e-3``, inside the tolerance.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    cases = [
        ("box-1d", Box([-1.0], [0.5]), np.eye(1)),
        ("ball-1d", Ball([0.2], 0.7), np.eye(1)),
        ("box-2d", Box([-0.5, -1.0], [0.3, 2.0]), np.eye(2)),
        ("ball-2d", Ball([0.1, -0.2], 0.8), np.eye(2)),
        ("box-2d-line", Box([-0.5, -1.0], [0.3, 2.0]), null_space_basis(np.array([[1.0, 1.0]]) / np.sqrt(2), 2)),
    ]
    worst = 0.0
    per = {}
    for name, fset, basis in cases:
        n = fset.n
        case_worst = 0.0
        coef = unit_ball_grid(basis.shape[1], step)
        for _ in range(samples // len(cases) + (samples % len(cases) > 0)):
            x = fset.project(fset.witness() + rng.uniform(-1.0, 1.0, n))
            g = rng.standard_normal(n)
            g *= rng.uniform(0.1, 2.0) / np.linalg.norm(g)
            got = chi(g, x, fset, basis, tol=1e-10).value
            ref = grid_chi(g, x, fset, basis, step, coef)
            case_worst = max(case_worst, abs(got - ref))
        per[name] = case_worst
        worst = max(worst, case_worst)
    return CheckResult("chi-oracle", worst <= tol, samples, worst, tol, time.perf_counter() - t0,
                       {"max_abs_difference": per})


SUITES = {
    "overestimate": overestimation,
    "gradients": lambda: [gradient_domination(), model_gradients()],
    "chi-oracle": chi_oracle,
}


def run_suite(name):
    """Results (list) of a named suite."""
    out = SUITES[name]()
    return out if isinstance(out, list) else [out]
