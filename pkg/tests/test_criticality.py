import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psarp.activity import null_space_basis
from psarp.checks import grid_chi
from psarp.criticality import chi, chi_model
from psarp.feasible import Ball, Box, Halfspaces


def test_unit_ball_free():
    r = chi(np.array([1.0, 0.0]), np.zeros(2), Box.free(2), np.eye(2))
    assert r.value == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(r.d_star, [-1.0, 0.0], atol=1e-6)


def test_square_on_interval():
    # f(x) = x^2, x = 0.5, g = 1; feasible d in [-1, 0.5]
    fset = Box([-1.0], [1.0])
    r = chi(np.array([1.0]), np.array([0.5]), fset, np.eye(1))
    assert r.value == pytest.approx(grid_chi(np.array([1.0]), np.array([0.5]), fset, np.eye(1)), abs=1e-3)
    assert r.value == pytest.approx(1.0, abs=1e-8)
    assert r.d_star[0] == pytest.approx(-1.0, abs=1e-6)


def test_gradient_orthogonal_to_subspace():
    r = chi(np.array([1.0, 0.0]), np.zeros(2), Box.free(2), np.eye(2)[:, [1]])
    assert r.value == 0.0


def test_model_zero_gradient():
    assert chi_model(np.zeros(3), np.zeros(3), Box.free(3), np.eye(3)).value <= 1e-10


def test_model_at_boundary_point():
    fset = Box([-1.0], [1.0])
    r = chi_model(np.array([2.0]), np.array([1.0]), fset, np.eye(1))
    assert r.value == pytest.approx(2.0, abs=1e-8)
    assert r.value == pytest.approx(grid_chi(np.array([2.0]), np.array([1.0]), fset, np.eye(1)), abs=2e-3)


def test_empty_subspace():
    assert chi(np.ones(2), np.zeros(2), Box.free(2), np.zeros((2, 0))).value == 0.0


def test_interior_minimizer_gap_certified():
    # gradient pushes into a corner that is closer than the unit ball
    fset = Box([-0.3, -0.2], [1.0, 1.0])
    r = chi(np.array([1.0, 1.0]), np.zeros(2), fset, np.eye(2), tol=1e-10)
    assert r.value == pytest.approx(0.5, abs=1e-8)
    assert r.gap <= 1e-8


def test_minimizer_feasible_and_value_consistent():
    rng = np.random.default_rng(4)
    fset = Halfspaces([[1.0, 2.0, 0.0], [-1.0, 0.5, 1.0]], [0.5, 0.3])
    for _ in range(30):
        x = fset.project(rng.normal(0, 1, 3))
        g = rng.normal(0, 1, 3)
        r = chi(g, x, fset, np.eye(3), tol=1e-10)
        assert np.linalg.norm(r.d_star) <= 1 + 1e-10
        assert fset.contains(x + r.d_star, tol=1e-8)
        assert r.value == pytest.approx(abs(g @ r.d_star), abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(0, 10_000))
def test_positive_scaling(c, seed):
    rng = np.random.default_rng(seed)
    fset = Ball([0.2, -0.1], 1.0)
    x = fset.project(rng.normal(0, 1, 2))
    g = rng.normal(0, 1, 2)
    r1 = chi(g, x, fset, np.eye(2), tol=1e-12)
    r2 = chi(c * g, x, fset, np.eye(2), tol=1e-12)
    assert r2.value == pytest.approx(c * r1.value, rel=1e-6, abs=1e-9)
    assert np.allclose(r1.d_star, r2.d_star, atol=1e-5)


def test_restriction_to_single_direction_never_larger():
    rng = np.random.default_rng(9)
    fset = Box([-1.0] * 3, [1.0] * 3)
    for _ in range(50):
        x = rng.uniform(-1, 1, 3)
        g = rng.normal(0, 1, 3)
        blocked = np.array([[0.0, 0.0, 1.0]])
        R = null_space_basis(blocked, 3)
        full = chi(g, x, fset, R, tol=1e-10).value
        one = chi(g, x, fset, np.eye(3)[:, [0]], tol=1e-10).value
        assert one <= full + 1e-8
