import numpy as np
import pytest

from psarp.activity import classify, freeze, null_space_basis
from psarp.elements import ZeroElement
from psarp.errors import ContractViolation
from psarp.feasible import Box
from psarp.problem import ElementMap, Problem, coordinate_map, unit_row


def _two_h_problem():
    # N spans R^2; H = {e1, e2}
    nice = [(ZeroElement(2), ElementMap(np.eye(2)))]
    return Problem(2, nice, [coordinate_map(2, 0), coordinate_map(2, 1)], 0.5, Box.free(2))


def test_classify_single_near_zero(zero_plus_h2):
    st = classify(zero_plus_h2, np.array([0.3, 1e-4]), 1e-3)
    assert st.active_C == {0}
    assert np.allclose(np.abs(st.basis_R), [[1.0], [0.0]])
    assert st.work_W == list(zero_plus_h2.nice_indices)


def test_classify_eps_zero(zero_plus_h2):
    st = classify(zero_plus_h2, np.array([0.3, 1e-4]), 0.0)
    assert st.active_C == frozenset() and st.dim_R == 2
    assert st.work_W == list(zero_plus_h2.all_indices)


def test_classify_all_near_zero():
    pr = _two_h_problem()
    st = classify(pr, np.array([1e-5, -1e-5]), 1e-3)
    assert st.dim_R == 0 and st.work_W == [0]


def test_tie_counts_as_active():
    pr = _two_h_problem()
    st = classify(pr, np.array([1e-3, 1.0]), 1e-3)
    assert st.active_C == {0}


def test_basis_orthogonal_to_blocked_maps():
    rng = np.random.default_rng(0)
    n = 5
    maps = [unit_row(rng.standard_normal(n)) for _ in range(3)]
    pr = Problem(n, [(ZeroElement(n), ElementMap(np.eye(n)))], maps, 0.5, Box.free(n))
    x = rng.standard_normal(n)
    x -= maps[0].rows[0] * (maps[0].rows[0] @ x)  # U_0 x = 0
    st = classify(pr, x, 1e-6)
    assert st.active_C == {0}
    st = freeze(st, 2)
    for j in st.blocked:
        assert np.max(np.abs(maps[j].rows @ st.basis_R)) <= 1e-10
    assert np.allclose(st.basis_R.T @ st.basis_R, np.eye(st.dim_R))
    assert st.dim_R == n - 2


def test_freeze_collapses_and_is_idempotent(zero_plus_h2):
    st = classify(zero_plus_h2, np.array([0.3, 0.5]), 1e-3)
    assert st.dim_R == 2
    st1 = freeze(st, 0)
    assert st1.dim_R == 1 and st1.frozen == {0}
    assert np.allclose(np.abs(st1.basis_R), [[1.0], [0.0]])
    assert freeze(st1, 0) is st1


def test_freeze_last_free_coordinate_rank_drop():
    pr = _two_h_problem()
    st = classify(pr, np.array([1e-5, 0.7]), 1e-3)
    assert st.dim_R == 1
    st = freeze(st, 1)
    # rank of the stacked blocked maps is 2, so dim R = 0
    assert st.dim_R == 2 - np.linalg.matrix_rank(pr.singular_rows)


def test_freeze_rejects_non_singular_index(zero_plus_h2):
    st = classify(zero_plus_h2, np.array([0.3, 0.5]), 1e-3)
    with pytest.raises(ContractViolation):
        freeze(st, 5)
    with pytest.raises(ContractViolation):
        freeze(st, -1)


def test_cover_and_disjointness():
    pr = _two_h_problem()
    st = freeze(classify(pr, np.array([1e-5, 0.7]), 1e-3), 1)
    W = set(st.work_W)
    blocked_global = {pr.n_nice + j for j in st.blocked}
    assert W | blocked_global == set(pr.all_indices)
    assert not W & blocked_global


def test_null_space_general_rows():
    rows = np.array([[1.0, 1.0, 0.0]]) / np.sqrt(2)
    B = null_space_basis(rows, 3)
    assert B.shape == (3, 2) and np.allclose(rows @ B, 0.0)
