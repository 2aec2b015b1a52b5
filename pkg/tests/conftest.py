import numpy as np
import pytest

from psarp.elements import QuadraticElement, ZeroElement
from psarp.feasible import Box
from psarp.problem import Problem, coordinate_map


def central_diff(fun, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


@pytest.fixture
def square_1d():
    """f(x) = x^2 on [-1, 1]."""
    return Problem(1, [(QuadraticElement([[2.0]], [0.0], 0.0), coordinate_map(1, 0))], [], 0.5,
                   Box([-1.0], [1.0]), x0=[0.8])


@pytest.fixture
def zero_plus_h2():
    """n=2, N={0 on x1}, H={e2}, q=0.5 (second coordinate only through the singular term)."""
    return Problem(2, [(ZeroElement(1), coordinate_map(2, 0))], [coordinate_map(2, 1)], 0.5,
                   Box.free(2))


def build_model(problem, x, p=3, h_model="two-sided", sigma=1.0, eps=0.0):
    """Local model at ``x`` with every singular element free (no activity)."""
    from psarp.activity import classify
    from psarp.models import LocalModel, ModelConfig
    from psarp.problem import element_values, eval_derivative

    x = np.asarray(x, dtype=float)
    state = classify(problem, x, eps)
    nice_vals, _ = element_values(problem, x)
    tensors = [eval_derivative(problem, x, j, active=state.work_W) for j in range(1, p + 1)]
    tensors = [{i: t[i] for i in problem.nice_indices} for t in tensors]
    sig = np.full(problem.n_nice, float(sigma))
    conf = ModelConfig(p, h_model, problem.q, problem.n_singular > 0)
    return LocalModel(problem, x, conf, nice_vals, tensors, sig, state.free_singular), state


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
