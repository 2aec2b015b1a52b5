import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from conftest import build_model
from psarp.elements import QuadraticElement
from psarp.errors import StepFailure
from psarp.feasible import Ball, Box
from psarp.problem import ElementMap, Problem, coordinate_map
from psarp.subsolver import STEP_RULES, SubsolverConfig, compute_step, stopping_bound


def _check_invariants(res, model, x, fset):
    assert res.chi_m_value <= res.rhs_bound + 1e-12
    assert res.assembled.value < res.model_at_zero
    assert fset.contains(x + res.s, tol=1e-10)


@pytest.mark.parametrize("rule", STEP_RULES)
def test_one_dimensional_quadratic(square_1d, rule):
    pr = Problem(1, square_1d.nice, [], 0.5, Box.free(1))
    x = np.array([1.0])
    model, state = build_model(pr, x, p=2, sigma=1e-3)
    cfg = SubsolverConfig(eps=1e-6, q=0.5, p=2, theta=1e-8, step_rule=rule)
    res = compute_step(model, state, x, pr.feasible, cfg)
    _check_invariants(res, model, x, pr.feasible)
    ref = minimize_scalar(lambda t: 1 + 2 * t + t * t + 1e-3 / 6 * abs(t) ** 3, bracket=(-2, 0), tol=1e-12).x
    assert res.s[0] == pytest.approx(ref, abs=1e-5)
    assert res.chi_m_value <= 1e-8


def test_slides_along_active_box_face():
    # f = (x1 - 2)^2 + (x2 - 0.5)^2 on [0, 1]^2 from (1, 0.2): KKT point (1, 0.5)
    pr = Problem(2, [(QuadraticElement(2 * np.eye(2), [-4.0, -1.0], 4.25), ElementMap(np.eye(2)))], [], 0.5,
                 Box([0.0, 0.0], [1.0, 1.0]))
    x = np.array([1.0, 0.2])
    model, state = build_model(pr, x, p=2, sigma=1e-6)
    cfg = SubsolverConfig(eps=1e-6, q=0.5, p=2, theta=1e-3)
    res = compute_step(model, state, x, pr.feasible, cfg)
    _check_invariants(res, model, x, pr.feasible)
    assert np.allclose(x + res.s, [1.0, 0.5], atol=1e-3)
    assert res.s[0] == 0.0


def test_singular_coordinate_frozen():
    # |x1|^0.5 pulls x1 to 0; a quadratic keeps x2 busy
    pr = Problem(2, [(QuadraticElement([[2.0]], [-2.0], 1.0), coordinate_map(2, 1))], [coordinate_map(2, 0)], 0.5,
                 Box([-1.0, -2.0], [1.0, 2.0]))
    x = np.array([0.05, 0.0])
    eps = 1e-3
    model, state = build_model(pr, x, p=3, sigma=1.0, eps=eps)
    assert state.free_singular == [0]
    res = compute_step(model, state, x, pr.feasible, SubsolverConfig(eps=eps, q=0.5, p=3))
    _check_invariants(res, model, x, pr.feasible)
    assert res.freezes == [0]
    z = x + res.s
    assert 0.0 < z[0] <= eps
    assert res.activity.frozen == {0}
    # later moves stay in the kernel of the frozen map
    assert np.allclose(res.activity.basis_R.T @ np.array([1.0, 0.0]), 0.0)


@pytest.mark.parametrize("h_model", ["two-sided", "true"])
def test_invariants_on_random_instances(h_model):
    rng = np.random.default_rng(11)
    for trial in range(20):
        n = 3
        Q = rng.standard_normal((n, n))
        nice = [(QuadraticElement(Q @ Q.T, rng.standard_normal(n), 0.0), ElementMap(np.eye(n)))]
        pr = Problem(n, nice, [coordinate_map(n, 0), coordinate_map(n, 2)], 0.5, Ball(np.zeros(n), 2.0))
        x = pr.feasible.project(rng.uniform(-1, 1, n))
        model, state = build_model(pr, x, p=3, h_model=h_model, sigma=1.0, eps=1e-3)
        cfg = SubsolverConfig(eps=1e-3, q=0.5, p=3)
        res = compute_step(model, state, x, pr.feasible, cfg)
        _check_invariants(res, model, x, pr.feasible)
        assert res.inner_iters >= 1


def test_inner_cap_reports_best_step():
    pr = Problem(2, [(QuadraticElement(np.diag([1.0, 1e4]), [1.0, 1.0], 0.0), ElementMap(np.eye(2)))], [], 0.5,
                 Box.free(2))
    x = np.array([3.0, 3.0])
    model, state = build_model(pr, x, p=2, sigma=1e-8)
    cfg = SubsolverConfig(eps=1e-8, q=0.5, p=2, max_inner=2, theta=0.0, step_rule="doubling")
    with pytest.raises(StepFailure) as err:
        compute_step(model, state, x, pr.feasible, cfg)
    assert err.value.inner_iters == 2
    assert err.value.best_step is not None


def test_stopping_bound_empty_singular_set():
    s = np.array([0.3, 0.4])
    assert stopping_bound(np.zeros(2), s, np.zeros((0, 2)), 0.5, 2.0, 100.0, 3) == pytest.approx(100 * 0.5 ** 3)
    rows = np.array([[1.0, 0.0]])
    got = stopping_bound(np.array([0.1, 0.0]), s, rows, 0.5, 2.0, 100.0, 3)
    assert got == pytest.approx(0.25 * 0.25 * 0.4 ** 2)


def test_config_validation():
    with pytest.raises(ValueError):
        SubsolverConfig(eps=1e-3, q=0.5, p=3, step_rule="newton")
    with pytest.raises(ValueError):
        SubsolverConfig(eps=1e-3, q=0.5, p=3, r=1.0)
