"""Outer loop of the partially separable adaptive regularization method.

Each iteration checks approximate criticality at ``x_k``, builds the local
model, computes a step, accepts or rejects it from the ratio of achieved to
Taylor-predicted decrease, and adapts one regularization weight per nice
element.

Evaluation accounting: ``f`` at the trial point is the only objective
evaluation of an iteration (``f(x_{k+1})`` is reused from it); the gradient of
the working objective is evaluated at the start of every iteration; orders
``2..p`` are evaluated once per distinct non-terminal iterate.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .activity import classify
from .criticality import chi
from .elements import PowerElement
from .errors import ConfigError, ContractViolation, PsarpError, SolveFailure
from .feasible import check_kernel_centered
from .models import TRUE, TWO_SIDED, LocalModel, ModelConfig, decrements
from .problem import EvaluationLedger, Problem, assemble_gradient, element_values, eval_derivative
from .subsolver import SubsolverConfig, compute_step

_log = logging.getLogger(__name__)

TRACE_SCHEMA = "psarp-trace/1"
SUCCESSFUL = "successful"
UNSUCCESSFUL = "unsuccessful"
TERMINATED = "terminated"
# final record of a run stopped by max_outer: chi was evaluated, no step taken
EXHAUSTED = "max_iterations"

ROUNDOFF = 8.0 * np.finfo(float).eps


@dataclass
class SolverConfig:
    """Algorithm constants.

    The defaults for the acceptance and update constants follow common
    adaptive-regularization practice; ``sigma_update`` picks the midpoint of
    the increase interval and the lower end of the decrease interval.
    """

    eps: float = 1e-3
    p: int = 3
    h_model: str = TWO_SIDED
    gamma0: float = 0.5
    gamma1: float = 2.0
    gamma2: float = 10.0
    eta: float = 0.1
    theta: float = 100.0
    kappa_big: float = 100.0
    sigma_min: float = 1e-8
    sigma0: object = 1.0
    r: float = 2.0
    max_outer: int = 1000
    max_inner: int = 5000
    allow_general_set: bool = False
    transfer_disjoint: bool = True
    chi_tol: float = 1e-10
    inner_step_rule: str = "bb"

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise ConfigError(f"eps must lie in (0, 1], got {self.eps}")
        if not 0.0 < self.gamma0 < 1.0 < self.gamma1 <= self.gamma2:
            raise ConfigError("need 0 < gamma0 < 1 < gamma1 <= gamma2")
        if not 0.0 < self.eta < 1.0:
            raise ConfigError(f"eta must lie in (0, 1), got {self.eta}")
        if self.theta < 0.0:
            raise ConfigError("theta must be non-negative")
        if self.kappa_big <= 1.0:
            raise ConfigError("kappa_big must exceed 1")
        if self.sigma_min <= 0.0:
            raise ConfigError("sigma_min must be positive")
        if np.min(np.atleast_1d(self.sigma0)) < self.sigma_min:
            raise ConfigError("every initial sigma must be at least sigma_min")
        if self.r <= 1.0:
            raise ConfigError("r must exceed 1")
        if int(self.p) != self.p or self.p < 1:
            raise ConfigError("p must be a positive integer")
        if self.h_model not in (TWO_SIDED, TRUE):
            raise ConfigError(f"unknown h_model {self.h_model!r}")

    def initial_sigma(self, n_nice):
        sig = np.broadcast_to(np.asarray(self.sigma0, dtype=float), (n_nice,)).copy()
        return sig


@dataclass
class IterateRecord:
    k: int
    x: list
    f: float
    chi: float
    sigma: list
    rho: float
    step_norm: float
    outcome: str
    ledger: dict
    dim_R: int
    n_blocked: int
    freezes: list = field(default_factory=list)
    inner_iters: int = 0
    sigma_increased: list = field(default_factory=list)
    sigma_decreased: list = field(default_factory=list)
    fresh_point: bool = True

    def to_json(self):
        d = asdict(self)
        d["schema"] = TRACE_SCHEMA
        return json.dumps(d, sort_keys=True, allow_nan=True)


@dataclass
class SolveResult:
    x: np.ndarray
    status: str
    trace: list
    ledger: EvaluationLedger
    final_chi: float
    final_f: float
    problem: Problem = field(repr=False)

    @property
    def terminated(self):
        return self.status == TERMINATED

    @property
    def successful_iterations(self):
        return sum(r.outcome == SUCCESSFUL for r in self.trace)

    @property
    def total_iterations(self):
        return sum(r.outcome in (SUCCESSFUL, UNSUCCESSFUL) for r in self.trace)

    def __iter__(self):
        # (x_eps, trace) unpacking
        return iter((self.x, self.trace))


def acceptance_ratio(delta_f, delta_T):
    """``rho = delta_f / delta_T``; the Taylor decrease must be positive."""
    if not delta_T > 0.0:
        raise ContractViolation(f"Taylor decrease must be positive, got {delta_T!r}")
    return delta_f / delta_T


def update_sigmas(sigma, trial_nice, model_nice, nice_delta_f, nice_delta_m, rho, delta_f, config):
    """New nice regularization weights and the indices increased/decreased.

    ``trial_nice[i] = f_i(x_i + s_i)`` and ``model_nice[i] = m_i(x_i, s_i)``.
    The overshoot test ``f_i > m_i`` ignores differences at rounding level
    (``ROUNDOFF`` times the larger magnitude), where the comparison has no
    significant digits.
    """
    sigma = np.asarray(sigma, dtype=float)
    new = sigma.copy()
    up, down = [], []
    success = rho >= config.eta
    slack = config.kappa_big * abs(delta_f)
    for i in range(sigma.size):
        if trial_nice[i] - model_nice[i] > ROUNDOFF * max(abs(trial_nice[i]), abs(model_nice[i])):
            new[i] = 0.5 * (config.gamma1 + config.gamma2) * sigma[i]
            up.append(i)
            continue
        dfi, dmi = nice_delta_f[i], nice_delta_m[i]
        over_neg = success and dfi <= 0.0 and dfi < dmi - slack
        over_pos = success and dfi > 0.0 and dfi > dmi + slack
        if over_neg or over_pos:
            new[i] = max(config.sigma_min, config.gamma0 * sigma[i])
            if new[i] < sigma[i]:
                down.append(i)
    return new, up, down


def transfer_disjoint_singular(problem, certificate):
    """Move singular elements whose kernel misses the feasible set to the nice set."""
    gone = set(certificate.disjoint)
    if not gone:
        return problem
    nice = list(problem.nice[: problem.n_nice_raw])
    for j in sorted(gone):
        nice.append((PowerElement(problem.q), problem.singular[j]))
    singular = [u for j, u in enumerate(problem.singular) if j not in gone]
    _log.info("moved %d singular element(s) to the nice set (kernel disjoint from F)", len(gone))
    return Problem(problem.n, nice, singular, problem.q, problem.feasible, x0=problem.x0,
                   name=problem.name)


def prepare(problem, config):
    """Mode gating; returns the (possibly transformed) problem and a mode tag."""
    has_h = problem.n_singular > 0
    ModelConfig(config.p, config.h_model, problem.q, has_singular=has_h)
    mode = config.h_model
    if config.h_model == TWO_SIDED and has_h:
        cert = check_kernel_centered(problem.feasible, problem.singular)
        if cert.disjoint and config.transfer_disjoint:
            problem = transfer_disjoint_singular(problem, cert)
            cert = check_kernel_centered(problem.feasible, problem.singular)
        if cert.violations or (cert.disjoint and not config.transfer_disjoint):
            if not config.allow_general_set:
                raise ConfigError(
                    f"feasible set is not kernel-centered for singular elements "
                    f"{cert.violations or cert.disjoint}; request the general-set mode to run anyway")
            mode = "two-sided-general"
            _log.warning("two-sided models on a non-kernel-centered set: worse complexity mode")
        elif any(f is None for f in cert.flags):
            _log.warning("kernel-centered property could not be certified for some singular elements")
    return problem, mode


def solve(problem, config, x0=None):
    """Run the algorithm from ``x0`` (or the problem's start) until ``chi <= eps``."""
    problem, _mode = prepare(problem, config)
    p, eps = config.p, config.eps
    mconf = ModelConfig(p, config.h_model, problem.q, has_singular=problem.n_singular > 0)
    sconf = SubsolverConfig(eps=eps, q=problem.q, p=p, r=config.r, theta=config.theta,
                            max_inner=config.max_inner, chi_tol=config.chi_tol,
                            step_rule=config.inner_step_rule)
    fset = problem.feasible
    start = problem.x0 if x0 is None else np.asarray(x0, dtype=float)
    if start is None:
        start = fset.witness()
    x = fset.project(np.asarray(start, dtype=float))

    ledger = EvaluationLedger()
    sigma = config.initial_sigma(problem.n_nice)
    trace = []
    nice_vals, h_vals = element_values(problem, x, ledger)
    f_x = float(np.sum(nice_vals) + np.sum(h_vals))
    higher = None
    fresh = True
    status = EXHAUSTED
    chi_val = np.nan
    try:
        for k in range(config.max_outer + 1):
            state = classify(problem, x, eps)
            grads = eval_derivative(problem, x, 1, active=state.work_W, ledger=ledger)
            g = assemble_gradient(problem, grads)
            chi_val = chi(g, x, fset, state.basis_R, tol=config.chi_tol).value
            base = dict(k=k, x=x.tolist(), f=f_x, chi=chi_val, sigma=sigma.tolist(),
                        dim_R=state.dim_R, n_blocked=len(state.blocked), fresh_point=fresh)
            if chi_val <= eps:
                trace.append(IterateRecord(rho=math.nan, step_norm=0.0, outcome=TERMINATED,
                                           ledger=ledger.snapshot(p), **base))
                status = TERMINATED
                break
            if k == config.max_outer:
                trace.append(IterateRecord(rho=math.nan, step_norm=0.0, outcome=EXHAUSTED,
                                           ledger=ledger.snapshot(p), **base))
                status = EXHAUSTED
                break
            if fresh:
                higher = [grads] + [eval_derivative(problem, x, j, active=state.work_W, ledger=ledger)
                                    for j in range(2, p + 1)]
            else:
                higher[0] = grads
            nice_tensors = [{i: t[i] for i in problem.nice_indices} for t in higher]
            model = LocalModel(problem, x, mconf, nice_vals, nice_tensors, sigma, state.free_singular)
            step = compute_step(model, state, x, fset, sconf)
            s = step.s
            x_trial = x + s
            t_nice, t_h = element_values(problem, x_trial, ledger)
            plus = step.activity.free_singular
            dec = decrements(model, s, t_nice, t_h, step.assembled, plus)
            if dec.delta_m <= 0.0 and step.freezes:
                # elements frozen mid-step carried the decrease; measure over W_k instead
                dec = decrements(model, s, t_nice, t_h, step.assembled, state.free_singular)
                _log.debug("decrements over W_k at iteration %d after freezes %s", k, step.freezes)
            if dec.delta_T <= 0.0:
                raise ContractViolation(f"non-positive Taylor decrease {dec.delta_T:.3e} at iteration {k}")
            rho = acceptance_ratio(dec.delta_f, dec.delta_T)
            new_sigma, up, down = update_sigmas(sigma, t_nice, step.assembled.nice_values, dec.nice_delta_f,
                                                dec.nice_delta_m, rho, dec.delta_f, config)
            outcome = SUCCESSFUL if rho >= config.eta else UNSUCCESSFUL
            trace.append(IterateRecord(rho=rho, step_norm=float(np.linalg.norm(s)), outcome=outcome,
                                       ledger=ledger.snapshot(p), freezes=list(step.freezes),
                                       inner_iters=step.inner_iters, sigma_increased=up,
                                       sigma_decreased=down, **base))
            _log.debug("k=%d f=%.6e chi=%.3e rho=%.3f |s|=%.2e %s", k, f_x, chi_val, rho,
                       np.linalg.norm(s), outcome)
            sigma = new_sigma
            if outcome == SUCCESSFUL:
                x = x_trial
                nice_vals, h_vals = t_nice, t_h
                f_x = float(np.sum(nice_vals) + np.sum(h_vals))
                fresh = True
            else:
                fresh = False
    except PsarpError as exc:
        failure = SolveFailure(f"solve aborted: {exc}", trace=trace, cause=exc)
        failure.ledger = ledger
        raise failure from exc
    return SolveResult(x=x, status=status, trace=trace, ledger=ledger, final_chi=float(chi_val),
                       final_f=f_x, problem=problem)


def expected_ledger(trace, p):
    """Evaluation counts implied by a trace under the accounting rule of :func:`solve`."""
    objective = 1 + sum(r.outcome in (SUCCESSFUL, UNSUCCESSFUL) for r in trace)
    first = len(trace)
    higher = sum(r.fresh_point and r.outcome in (SUCCESSFUL, UNSUCCESSFUL) for r in trace)
    derivs = {1: first}
    for j in range(2, p + 1):
        derivs[j] = higher
    return {"objective": objective, "derivatives": derivs}


def write_trace(trace, path):
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(rec.to_json() + "\n")


def read_trace(path):
    out = []
    with open(path) as fh:
        for line in fh:
            d = json.loads(line)
            if d.pop("schema", None) != TRACE_SCHEMA:
                raise ValueError(f"not a {TRACE_SCHEMA} record")
            d["ledger"]["derivatives"] = {int(j): v for j, v in d["ledger"]["derivatives"].items()}
            out.append(IterateRecord(**d))
    return out


__all__ = ["SolverConfig", "IterateRecord", "SolveResult", "solve", "acceptance_ratio", "update_sigmas",
           "expected_ledger", "write_trace", "read_trace", "prepare", "replace"]
