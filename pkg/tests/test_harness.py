import json

import numpy as np
import pytest

from psarp.errors import ConfigError, ProblemParseError
from psarp.harness import SEED_ENV, build_instance, fit_slope, gen_lq_regression, parse_generator_spec, run_sweep
from psarp.problem import eval_f
from psarp.problemfile import (problem_from_descriptor, problem_to_descriptor, problems_equal,
                               save_descriptor)


def test_toy1d():
    inst = build_instance("toy1d")
    pr = inst.problem
    assert pr.n == 1 and pr.n_singular == 0
    assert pr.nice[0][0].kind == "quadratic"
    assert pr.feasible.lo.tolist() == [-1.0] and pr.feasible.hi.tolist() == [1.0]


def test_lq_regression_deterministic():
    a = build_instance("lq-regression n=20 m=30 q=0.5 seed=7")
    b = build_instance("lq-regression n=20 m=30 q=0.5 seed=7")
    c = build_instance("lq-regression n=20 m=30 q=0.5 seed=8")
    assert a.digest == b.digest != c.digest
    assert a.problem.n == 20 and a.problem.n_singular == 20 and a.problem.n_nice_raw == 30


def test_lq_regression_is_separable_sum():
    # the objective equals sum (a_i^T x - b_i)^2 + lam sum |x_j|^q after undoing the variable scaling
    desc = gen_lq_regression(n=5, m=7, q=0.5, seed=3, lam=2.0)
    inst = build_instance(desc)
    gen = desc["generator"]
    c = gen["scale"]
    rng = np.random.default_rng(0)
    y = rng.uniform(-0.5, 0.5, 5)
    data = np.random.default_rng(3)
    A = data.standard_normal((7, 5))
    x_true = np.where(data.random(5) < 0.25, data.uniform(-2.0, 2.0, 5), 0.0)
    b = A @ x_true + 0.01 * data.standard_normal(7)
    assert c == pytest.approx(2.0 ** -2)
    x = c * y
    want = float(np.sum((A @ x - b) ** 2) + 2.0 * np.sum(np.abs(x) ** 0.5))
    assert eval_f(inst.problem, y) == pytest.approx(want, rel=1e-12)


def test_descriptor_round_trip(tmp_path):
    inst = build_instance("lq-regression n=6 m=8 seed=2 shift=0.25")
    desc = problem_to_descriptor(inst.problem, seed=2)
    again = problem_from_descriptor(json.loads(json.dumps(desc)))
    assert problems_equal(inst.problem, again)
    path = tmp_path / "p.json"
    save_descriptor(inst.descriptor, path)
    from_file = build_instance(str(path))
    assert problems_equal(inst.problem, from_file.problem)
    assert from_file.digest == inst.digest


@pytest.mark.parametrize("patch, where", [
    ({"q": 1.5}, "/q"),
    ({"schema": "other/1"}, "/schema"),
    ({"extra": 1}, "/"),
])
def test_parse_errors_carry_location(patch, where):
    desc = build_instance("toy1d").descriptor
    desc = {**desc, **patch}
    with pytest.raises(ProblemParseError) as err:
        problem_from_descriptor(desc)
    assert err.value.location == where


def test_parse_error_in_element():
    desc = build_instance("toy1d").descriptor
    desc["elements"][0]["U"] = [[1.0, 2.0]]
    with pytest.raises(ProblemParseError) as err:
        problem_from_descriptor(desc)
    assert err.value.location == "/elements/0"


def test_parse_error_in_json_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ProblemParseError):
        build_instance(str(path))


def test_seed_env_overrides(monkeypatch):
    base = build_instance("lq-regression n=5 m=6 seed=1")
    monkeypatch.setenv(SEED_ENV, "9")
    env = build_instance("lq-regression n=5 m=6 seed=1")
    monkeypatch.delenv(SEED_ENV)
    nine = build_instance("lq-regression n=5 m=6 seed=9")
    assert env.digest == nine.digest != base.digest
    assert env.descriptor["seed"] == 9


def test_generator_spec_parsing():
    assert parse_generator_spec("lq-regression n=20 q=0.5 lam=1e-2") == ("lq-regression", {"n": 20, "q": 0.5, "lam": 0.01})
    with pytest.raises(ConfigError):
        parse_generator_spec("chained n")


def test_quadratic_sweep_slope_flat():
    inst = build_instance("chained n=10")
    rep = run_sweep(inst, [1e-1, 1e-2, 1e-3, 1e-4], inst.config(p=2))
    assert all(pt.status == "terminated" for pt in rep.points)
    assert max(pt.succ_iters for pt in rep.points) <= 50
    assert abs(rep.slope) <= 0.1


def test_lq_regression_sweep_slope():
    inst = build_instance("lq-regression n=20 m=30 q=0.5 seed=7")
    rep = run_sweep(inst, [1e-1, 1e-2, 1e-3], inst.config(p=3))
    assert all(pt.status == "terminated" for pt in rep.points)
    assert rep.slope <= 4.0 / 3.0 + 0.3
    assert rep.consistent


def test_single_eps_slope_null():
    inst = build_instance("toy1d")
    rep = run_sweep(inst, [1e-3], inst.config(p=2))
    assert rep.slope is None
    assert fit_slope([1e-3, 1e-3], [4, 5]) is None


def test_csv_deterministic_and_consistent():
    inst = build_instance("chained n=6 seed=4")
    cfg = inst.config(p=3)
    a = run_sweep(inst, [1e-2, 1e-4], cfg)
    b = run_sweep(build_instance("chained n=6 seed=4"), [1e-2, 1e-4], cfg)
    assert a.to_csv() == b.to_csv()
    assert a.consistent
    header = a.to_csv().splitlines()[0].split(",")
    assert header == ["eps", "succ_iters", "total_iters", "f_evals", "g_evals", "d2_evals", "d3_evals",
                      "final_chi", "final_f", "status"]
    for pt in a.points:
        assert pt.trace_counts == {"objective": pt.f_evals, "derivatives": pt.derivative_evals}


def test_failures_recorded_per_eps():
    inst = build_instance("toy1d")
    rep = run_sweep(inst, [1e-1, 1e-2], inst.config(p=2, max_inner=0))
    assert [pt.status for pt in rep.points] == ["failed", "failed"]
    assert all(pt.error for pt in rep.points)
    assert rep.slope is None


def test_sweep_rejects_bad_eps():
    inst = build_instance("toy1d")
    with pytest.raises(ConfigError):
        run_sweep(inst, [2.0])


def test_published_schema_matches_code():
    from pathlib import Path

    from psarp.problemfile import PROBLEM_SCHEMA

    path = Path(__file__).resolve().parents[1] / "docs" / "psarp-problem-1.schema.json"
    assert json.loads(path.read_text()) == json.loads(json.dumps(PROBLEM_SCHEMA))
