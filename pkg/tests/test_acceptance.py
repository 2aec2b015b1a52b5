"""Acceptance criteria 1-9.

Each test records one ``[PASS]``/``[FAIL]`` line (shown in the terminal
summary) before asserting, so a failing criterion is still reported.
Run on its own with ``pytest tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from psarp import SolverConfig, solve
from psarp.activity import classify
from psarp.checks import chi_oracle, gradient_domination, model_gradients, overestimation
from psarp.criticality import chi
from psarp.driver import TERMINATED, UNSUCCESSFUL, expected_ledger, prepare
from psarp.elements import QuadraticElement
from psarp.errors import ConfigError
from psarp.feasible import Box
from psarp.harness import build_instance, run_sweep
from psarp.problem import ElementMap, Problem, assemble_gradient, eval_derivative, unit_row

LQ = "lq-regression n=20 m=30 q=0.5 seed=7"
LQ_SHIFTED = LQ + " shift=0.25"
SWEEP_EPS = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
SLOPE_BOUND = 4.0 / 3.0 + 0.3


def record(number, passed, detail):
    flag = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES[number] = f"[{flag}] criterion {number}: {detail}"
    print(ACCEPTANCE_LINES[number])
    return passed


@pytest.fixture(scope="module")
def runs():
    """Solves shared by the sigma and termination criteria."""
    cases = [("toy1d", dict(p=2, eps=1e-4)),
             ("singular1d", dict(p=3, eps=1e-3)),
             ("chained n=10", dict(p=2, eps=1e-5)),
             ("rosenbrock n=6", dict(p=3, eps=1e-4))]
    for eps in SWEEP_EPS:
        cases.append((LQ, dict(p=3, eps=eps)))
        cases.append((LQ_SHIFTED, dict(p=3, eps=eps, h_model="true")))
    out = []
    for spec, kw in cases:
        inst = build_instance(spec)
        cfg = inst.config(**kw)
        problem, _ = prepare(inst.problem, cfg)
        out.append((f"{spec} {kw}", problem, cfg, solve(inst.problem, cfg)))
    return out


def test_criterion_1_overestimation():
    res = overestimation(samples=10_000)
    ok = res.passed and res.elapsed < 5.0
    record(1, ok, f"two-sided model overestimates |x+s|^q on {res.samples} samples, "
                  f"worst violation {res.worst:.2e} (tol 1e-10), {res.elapsed:.2f}s (limit 5s)")
    assert ok


def test_criterion_2_gradient_domination():
    res = gradient_domination(samples=10_000)
    record(2, res.passed, f"min |grad m(x,s)| / (q/2 q|x|^(q-1)) = {res.worst:.4f} > 1 on {res.samples} samples, "
                          f"{res.details['sign_mismatches']} sign mismatches")
    assert res.passed


def test_criterion_3_model_gradients():
    res = model_gradients(samples=1000)
    errs = ", ".join(f"{k} {v:.1e}" for k, v in res.details["max_relative_error"].items())
    record(3, res.passed, f"finite-difference relative errors {errs} (tol 1e-5)")
    assert res.passed


def test_criterion_4_chi_oracle():
    res = chi_oracle(samples=200, tol=5e-3, step=1e-3)
    record(4, res.passed, f"chi vs grid search on {res.samples} gradients, max |difference| {res.worst:.2e} (tol 5e-3)")
    assert res.passed


def test_criterion_5_sigma_discipline(runs):
    quad_increases = None
    below_min = 0
    unsucc = 0
    unsucc_without_increase = []
    for label, problem, cfg, res in runs:
        for rec in res.trace:
            below_min += int(min(rec.sigma) < cfg.sigma_min) if rec.sigma else 0
            if rec.outcome == UNSUCCESSFUL:
                unsucc += 1
                if not rec.sigma_increased:
                    unsucc_without_increase.append((label, rec.k))
        if label.startswith("chained"):
            assert cfg.p == 2 and problem.n_singular == 0
            quad_increases = sum(len(r.sigma_increased) for r in res.trace)
    ok = quad_increases == 0 and below_min == 0 and not unsucc_without_increase
    record(5, ok, f"{quad_increases} sigma increases on the p=2 quadratic run; {below_min} records below sigma_min; "
                  f"{len(unsucc_without_increase)} of {unsucc} unsuccessful iterations without an increase "
                  f"({len(runs)} runs)")
    assert ok


def _independent_chi(problem, x, eps):
    state = classify(problem, x, eps)
    g = assemble_gradient(problem, eval_derivative(problem, x, 1, active=state.work_W))
    return chi(g, x, problem.feasible, state.basis_R, tol=1e-12).value


def test_criterion_6_termination(runs):
    bad_chi, bad_dim, bad_freeze, terminated = [], [], [], 0
    for label, problem, cfg, res in runs:
        if res.status != TERMINATED:
            bad_chi.append((label, res.status))
            continue
        terminated += 1
        value = _independent_chi(problem, res.x, cfg.eps)
        if not value <= cfg.eps * (1 + 1e-6):
            bad_chi.append((label, value))
        dims = [r.dim_R for r in res.trace]
        if any(b > a for a, b in zip(dims, dims[1:])):
            bad_dim.append(label)
        if sum(len(r.freezes) for r in res.trace) > problem.n_singular:
            bad_freeze.append(label)
    ok = not (bad_chi or bad_dim or bad_freeze)
    record(6, ok, f"{terminated}/{len(runs)} runs terminated; recomputed chi above eps(1+1e-6): {bad_chi or 'none'}; "
                  f"dim R increases: {bad_dim or 'none'}; freeze counts above |H|: {bad_freeze or 'none'}")
    assert ok


def test_criterion_7_complexity_order():
    t0 = time.perf_counter()
    inst = build_instance(LQ)
    assert (inst.problem.n, inst.problem.n_nice_raw) == (20, 30)
    two = run_sweep(inst, SWEEP_EPS, inst.config(p=3, h_model="two-sided"))
    shifted = build_instance(LQ_SHIFTED)
    true = run_sweep(shifted, SWEEP_EPS, shifted.config(p=3, h_model="true"))
    elapsed = time.perf_counter() - t0
    # the shifted box must really miss the kernels, otherwise the true-model run proves nothing
    with pytest.raises(ConfigError):
        prepare(shifted.problem, SolverConfig(p=3, transfer_disjoint=False))
    done = all(pt.status == TERMINATED for pt in two.points + true.points)
    ok = (done and two.slope is not None and true.slope is not None
          and two.slope <= SLOPE_BOUND and true.slope <= SLOPE_BOUND and elapsed < 300)
    iters = lambda rep: [pt.succ_iters for pt in rep.points]  # noqa: E731
    record(7, ok, f"slope two-sided {two.slope:.3f} (iters {iters(two)}), true model on shifted box "
                  f"{true.slope:.3f} (iters {iters(true)}), bound {SLOPE_BOUND:.3f}, {elapsed:.1f}s (limit 300s)")
    assert ok


def _gating_problem(lo, hi, u):
    n = len(lo)
    return Problem(n, [(QuadraticElement(np.eye(n), np.zeros(n), 0.0), ElementMap(np.eye(n)))], [unit_row(u)], 0.5,
                   Box(lo, hi))


def _rejected(problem, cfg):
    try:
        prepare(problem, cfg)
    except ConfigError:
        return True
    return False


def test_criterion_8_mode_gating():
    centered = _gating_problem([-1.0, -1.0], [1.0, 1.0], [1.0, 0.0])
    off = _gating_problem([-1.0, -1.0], [2.0, 1.0], [1.0, 1.0])
    checks = {
        "even p rejected": _rejected(centered, SolverConfig(p=2)),
        "odd p accepted": not _rejected(centered, SolverConfig(p=3)),
        "non-kernel-centered rejected": _rejected(off, SolverConfig(p=3)),
        "general-set mode accepted": not _rejected(off, SolverConfig(p=3, allow_general_set=True)),
        "true model accepted": not _rejected(off, SolverConfig(p=3, h_model="true")),
    }
    ok = all(checks.values())
    record(8, ok, "; ".join(f"{k}: {'yes' if v else 'NO'}" for k, v in checks.items()))
    assert ok


def test_criterion_9_ledger_exactness():
    inst = build_instance("rosenbrock n=6")
    cfg = inst.config(p=3, eps=1e-9, max_outer=50)
    res = solve(inst.problem, cfg)
    replay = expected_ledger(res.trace, cfg.p)
    got = res.ledger.snapshot(cfg.p)
    diff = {"objective": got["objective"] - replay["objective"]}
    diff.update({f"d{j}": got["derivatives"][j] - replay["derivatives"][j] for j in range(1, cfg.p + 1)})
    ok = res.total_iterations >= 50 and all(v == 0 for v in diff.values())
    record(9, ok, f"{res.total_iterations}-iteration trace ({res.successful_iterations} successful), "
                  f"ledger minus replay {diff}")
    assert ok
