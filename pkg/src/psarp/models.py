"""Element models and the assembled local model ``m(x, s)``.

Nice elements use their degree-``p`` Taylor expansion plus the regularization
``sigma_i / (p+1)! ||s_i||^(p+1)``.  Singular elements ``|t|^q`` use either the
two-sided expansion, an odd-degree Taylor polynomial of ``|t|^q`` reflected
through the origin via the displacement ``mu``, or the true term ``|t + s|^q``.
Scalar element functions accept numpy arrays and act elementwise.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolation, SingularDerivativeError

TWO_SIDED = "two-sided"
TRUE = "true"
H_MODELS = (TWO_SIDED, TRUE)


@dataclass(frozen=True)
class ModelConfig:
    """Model degree and singular-element model.

    ``p`` must be odd whenever two-sided models are used on a problem with
    singular elements, since even degrees lose the overestimation property.
    """

    p: int
    h_model: str = TWO_SIDED
    q: float = 0.5
    has_singular: bool = True

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ConfigError(f"model degree p must be a positive integer, got {self.p}")
        if self.h_model not in H_MODELS:
            raise ConfigError(f"unknown singular model {self.h_model!r}; expected one of {H_MODELS}")
        if not 0.0 < self.q < 1.0:
            raise ConfigError(f"q must lie in (0, 1), got {self.q}")
        if self.h_model == TWO_SIDED and self.has_singular and self.p % 2 == 0:
            raise ConfigError(f"two-sided models need an odd degree, got p={self.p}")


def _check_nonzero(x, s):
    x = np.asarray(x, dtype=float)
    xs = x + np.asarray(s, dtype=float)
    if np.any(x == 0.0) or np.any(xs == 0.0):
        raise SingularDerivativeError("two-sided model undefined when x_i = 0 or x_i + s_i = 0")
    return x, xs


def mu(x, s):
    """Signed displacement of the two-sided model."""
    x, xs = _check_nonzero(x, s)
    s = xs - x
    out = np.where(x > 0, np.where(xs > 0, s, -(2 * x + s)), np.where(xs < 0, -s, 2 * x + s))
    return out if out.ndim else float(out)


def two_sided_coefficients(anchor, q, p):
    """``c_j = q/j! prod_{l<j} (q - l) anchor^(q-j)`` for ``j = 1..p``.

    Returns an array of shape ``anchor.shape + (p,)``; built by a running
    product so no factorial is formed.
    """
    a = np.asarray(anchor, dtype=float)
    coefs = np.empty(a.shape + (p,))
    c = q * a ** (q - 1.0)
    for j in range(1, p + 1):
        coefs[..., j - 1] = c
        c = c * (q - j) / ((j + 1) * a)
    return coefs


def _poly_value_grad(coefs, m):
    """``sum_j c_j m^j`` and its derivative in ``m`` (Horner)."""
    p = coefs.shape[-1]
    val = np.zeros_like(m)
    der = np.zeros_like(m)
    for j in range(p, 0, -1):
        der = der * m + j * coefs[..., j - 1]
        val = (val + coefs[..., j - 1]) * m
    return val, der


def power_differences(a, b, p):
    """``D_j = (a + b)^j - a^j`` for ``j = 1..p`` without cancellation.

    Uses ``D_j = (a + b) D_{j-1} + b a^(j-1)``; returns shape ``a.shape + (p,)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty(np.broadcast(a, b).shape + (p,))
    d = np.zeros(out.shape[:-1])
    apow = np.ones_like(d)
    for j in range(p):
        d = (a + b) * d + b * apow
        apow = apow * a
        out[..., j] = d
    return out


def abs_power_difference(a, b, k):
    """``|a + b|^k - |a|^k`` accurate when ``|b|`` is small against ``|a|``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = power_differences(a, b, k)[..., -1]
    if k % 2 == 0:
        return diff
    same = np.sign(a + b) == np.sign(a)
    return np.where(same, np.sign(a) * diff, np.abs(a + b) ** k - np.abs(a) ** k)


def eval_two_sided(x, s, q, p):
    """Two-sided model of ``|x + s|^q`` around ``x`` and its derivative in ``s``."""
    x, xs = _check_nonzero(x, s)
    m = np.asarray(mu(x, xs - x), dtype=float)
    a = np.abs(x)
    coefs = two_sided_coefficients(a, q, p)
    poly, dpoly = _poly_value_grad(coefs, m)
    value = a ** q + poly
    grad = dpoly * np.sign(xs)
    if value.ndim == 0:
        return float(value), float(grad)
    return value, grad


def true_h_change(x, s, q):
    """``|x + s|^q - |x|^q`` without cancellation when ``x + s`` and ``x`` share a sign."""
    x = np.asarray(x, dtype=float)
    xs = x + np.asarray(s, dtype=float)
    same = (np.sign(xs) == np.sign(x)) & (x != 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_log = np.log1p(np.where(same, (xs - x) / np.where(x == 0.0, 1.0, x), 0.0))
        stable = np.abs(x) ** q * np.expm1(q * ratio_log)
    out = np.where(same, stable, np.abs(xs) ** q - np.abs(x) ** q)
    return out if out.ndim else float(out)


def eval_true_h(x, s, q):
    """True model ``|x + s|^q`` and its derivative (undefined at ``x + s = 0``)."""
    xs = np.asarray(x, dtype=float) + np.asarray(s, dtype=float)
    value = np.abs(xs) ** q
    if np.any(xs == 0.0):
        raise SingularDerivativeError("gradient of |x+s|^q undefined at x + s = 0")
    grad = q * np.abs(xs) ** (q - 1.0) * np.sign(xs)
    if value.ndim == 0:
        return float(value), float(grad)
    return value, grad


@dataclass
class TaylorData:
    """Taylor data of one nice element at ``x_i``: value, tensors 1..p, sigma."""

    value: float
    tensors: list
    sigma: float

    @property
    def p(self):
        return len(self.tensors)


def contract(tensor, s, times):
    """Apply ``tensor`` to ``times`` copies of ``s`` (from the last axis)."""
    out = tensor
    for _ in range(times):
        out = out @ s
    return out


def eval_nice_model(data, s_i, change=False):
    """Regularized Taylor model of a nice element and its gradient in ``s_i``.

    With ``change=True`` the returned value is ``m_i(x_i, s_i) - f_i(x_i)``,
    summed without the constant term so that small changes keep their digits.
    """
    s_i = np.asarray(s_i, dtype=float).reshape(-1)
    p = data.p
    value = 0.0 if change else data.value
    grad = np.zeros_like(s_i)
    for j, t in enumerate(data.tensors, start=1):
        v = contract(t, s_i, j - 1)
        grad = grad + v / math.factorial(j - 1)
        value += float(v @ s_i) / math.factorial(j)
    ns = float(np.linalg.norm(s_i))
    value += data.sigma / math.factorial(p + 1) * ns ** (p + 1)
    grad = grad + data.sigma / math.factorial(p) * ns ** (p - 1) * s_i
    return float(value), grad


def _mixed(tensor, s, d, k, j):
    """``T[s^(j-k), d^k]`` for a symmetric order-``j`` tensor."""
    out = tensor
    for _ in range(k):
        out = out @ d
    for _ in range(j - k):
        out = out @ s
    return float(out)


def nice_model_difference(data, s_i, d_i):
    """``m_i(x_i, s_i + d_i) - m_i(x_i, s_i)`` by binomial expansion (symmetric tensors)."""
    s_i = np.asarray(s_i, dtype=float).reshape(-1)
    d_i = np.asarray(d_i, dtype=float).reshape(-1)
    total = 0.0
    for j, t in enumerate(data.tensors, start=1):
        part = sum(math.comb(j, k) * _mixed(t, s_i, d_i, k, j) for k in range(1, j + 1))
        total += part / math.factorial(j)
    a = float(s_i @ s_i)
    b = float(2.0 * (s_i @ d_i) + d_i @ d_i)
    k = 0.5 * (data.p + 1)
    reg = (a ** k * math.expm1(k * math.log1p(b / a)) if a > 0.0 and b / a > -1.0
           else (a + b) ** k - a ** k)
    return total + data.sigma / math.factorial(data.p + 1) * reg


def taylor_value(data, s_i):
    """Unregularized Taylor polynomial ``T_{f_i,p}(x_i, s_i)``."""
    s_i = np.asarray(s_i, dtype=float).reshape(-1)
    value = data.value
    for j, t in enumerate(data.tensors, start=1):
        value += float(contract(t, s_i, j)) / math.factorial(j)
    return float(value)


@dataclass
class Assembled:
    """Model evaluated at one step ``s``."""

    value: float
    grad: np.ndarray
    nice_values: np.ndarray
    h_values: dict
    change: float = 0.0
    nice_changes: np.ndarray = None
    h_changes: dict = None


class LocalModel:
    """The model ``m(x_k, .)`` of all elements at the current iterate.

    Scalar nice elements (``n_i = 1``) are evaluated in one vectorized pass;
    larger elements fall back to tensor contractions element by element.

    Parameters
    ----------
    problem : Problem
    x : ndarray
        Current iterate.
    config : ModelConfig
    nice_values : ndarray
        ``f_i(U_i x)`` for every nice element.
    tensors : list of dict
        ``tensors[j-1][i]`` is ``nabla^j f_i(U_i x)``.
    sigma : ndarray
        Regularization weights of the nice elements.
    h_positions : iterable of int
        Singular positions in the working set at ``x``.
    """

    def __init__(self, problem, x, config, nice_values, tensors, sigma, h_positions):
        self.problem = problem
        self.x = np.asarray(x, dtype=float)
        self.config = config
        self.p = config.p
        self.q = problem.q
        self.sigma = np.asarray(sigma, dtype=float)
        self.nice_values = np.asarray(nice_values, dtype=float)
        self.data = [TaylorData(float(self.nice_values[i]), [tensors[j][i] for j in range(self.p)],
                                float(self.sigma[i])) for i in range(problem.n_nice)]
        scalar = [i for i in range(problem.n_nice) if problem.nice[i][0].dim == 1]
        self._scalar = np.array(scalar, dtype=int)
        self._general = [i for i in range(problem.n_nice) if problem.nice[i][0].dim != 1]
        if scalar:
            self._u_scalar = np.vstack([problem.nice[i][1].rows for i in scalar])
            self._d_scalar = np.array([[float(np.asarray(tensors[j][i]).reshape(-1)[0])
                                        for j in range(self.p)] for i in scalar])
            fact = np.array([math.factorial(j) for j in range(1, self.p + 1)], dtype=float)
            self._val_coef = self._d_scalar / fact
        self.h_positions = sorted(h_positions)
        hrows = problem.singular_rows
        self._h_idx = np.array(self.h_positions, dtype=int)
        self._h_rows = hrows[self._h_idx] if self.h_positions else np.zeros((0, problem.n))
        self.h_anchor = self._h_rows @ self.x
        self._h_base = {j: float(abs(a) ** self.q) for j, a in zip(self.h_positions, self.h_anchor)}
        if self.config.h_model == TWO_SIDED and self.h_positions:
            self._h_coefs = two_sided_coefficients(np.abs(self.h_anchor), self.q, self.p)

    def _nice(self, s):
        """Model changes ``m_i(s) - f_i(x)`` per element and the summed ambient gradient."""
        p = self.p
        dvals = np.empty(self.problem.n_nice)
        grad = np.zeros(self.problem.n)
        if self._scalar.size:
            si = self._u_scalar @ s
            powers = np.stack([si ** j for j in range(1, p + 1)], axis=1)
            lower = np.hstack([np.ones((si.size, 1)), powers[:, :-1]])
            fact_lower = np.array([math.factorial(j - 1) for j in range(1, p + 1)], dtype=float)
            sig = self.sigma[self._scalar]
            a = np.abs(si)
            dvals[self._scalar] = (np.sum(self._val_coef * powers, axis=1)
                                   + sig / math.factorial(p + 1) * a ** (p + 1))
            gi = np.sum(self._d_scalar * lower / fact_lower, axis=1) + sig / math.factorial(p) * a ** (p - 1) * si
            grad += self._u_scalar.T @ gi
        for i in self._general:
            rows = self.problem.nice[i][1].rows
            data = self.data[i]
            data.sigma = float(self.sigma[i])
            v, g = eval_nice_model(data, rows @ s, change=True)
            dvals[i] = v
            grad += rows.T @ g
        return dvals, grad

    def _singular(self, s, positions):
        """Model changes ``m_i(s) - |U_i x|^q`` and the ambient gradient for ``positions``."""
        if not positions:
            return {}, np.zeros(self.problem.n)
        where = np.searchsorted(self._h_idx, positions)
        anchors = self.h_anchor[where]
        si = self._h_rows[where] @ s
        if self.config.h_model == TWO_SIDED:
            x, xs = _check_nonzero(anchors, si)
            m = np.asarray(mu(x, si), dtype=float)
            vals, dpoly = _poly_value_grad(self._h_coefs[where], m)
            g = dpoly * np.sign(xs)
        else:
            _, g = eval_true_h(anchors, si, self.q)
            vals = np.atleast_1d(true_h_change(anchors, si, self.q))
            g = np.atleast_1d(g)
        grad = self._h_rows[where].T @ g
        return dict(zip(positions, vals.tolist())), grad

    def assemble(self, s, free_positions, frozen_positions=()):
        """Value of ``m`` over N and the singular working positions, gradient over N and ``free``.

        Frozen singular positions contribute their (constant) model value but
        no gradient: the step can no longer move them.
        """
        s = np.asarray(s, dtype=float)
        nice_dv, grad = self._nice(s)
        free = sorted(free_positions)
        frozen = sorted(frozen_positions)
        h_free, g_h = self._singular(s, free)
        h_frozen, _ = self._singular(s, frozen)
        h_dv = {**h_free, **h_frozen}
        base = self._h_base
        h_vals = {j: base[j] + v for j, v in h_dv.items()}
        change = float(np.sum(nice_dv) + sum(h_dv.values()))
        value = float(np.sum(self.nice_values) + sum(base[j] for j in h_dv)) + change
        return Assembled(value, grad + g_h, self.nice_values + nice_dv, h_vals, change, nice_dv, h_dv)

    def change_between(self, s, d, free_positions):
        """``m(x, s + d) - m(x, s)`` over N and ``free_positions``, summed term by term.

        Frozen singular positions are skipped since ``d`` lies in their kernel.
        """
        s = np.asarray(s, dtype=float)
        d = np.asarray(d, dtype=float)
        p = self.p
        total = 0.0
        if self._scalar.size:
            a = self._u_scalar @ s
            b = self._u_scalar @ d
            total += float(np.sum(self._val_coef * power_differences(a, b, p)))
            total += float(np.sum(self.sigma[self._scalar] * abs_power_difference(a, b, p + 1))) / math.factorial(p + 1)
        for i in self._general:
            rows = self.problem.nice[i][1].rows
            data = self.data[i]
            data.sigma = float(self.sigma[i])
            total += nice_model_difference(data, rows @ s, rows @ d)
        free = sorted(free_positions)
        if free:
            where = np.searchsorted(self._h_idx, free)
            anchors = self.h_anchor[where]
            si = self._h_rows[where] @ s
            di = self._h_rows[where] @ d
            if self.config.h_model == TWO_SIDED:
                xs_old, xs_new = anchors + si, anchors + si + di
                same = np.sign(xs_old) == np.sign(xs_new)
                m_old = np.asarray(mu(anchors, si), dtype=float).reshape(-1)
                diffs = np.sum(self._h_coefs[where] * power_differences(m_old, np.sign(xs_old) * di, p), axis=-1)
                if not np.all(same):
                    m_new = np.asarray(mu(anchors, si + di), dtype=float).reshape(-1)
                    direct = _poly_value_grad(self._h_coefs[where], m_new)[0] - _poly_value_grad(self._h_coefs[where], m_old)[0]
                    diffs = np.where(same, diffs, direct)
            else:
                diffs = true_h_change(anchors + si, di, self.q)
            total += float(np.sum(diffs))
        return total

    def value_at_zero(self, positions):
        """``m(x, 0)`` restricted to N and the given singular positions."""
        where = np.searchsorted(self._h_idx, sorted(positions)) if positions else []
        return float(np.sum(self.nice_values) + np.sum(np.abs(self.h_anchor[where]) ** self.q))

    def regularization_term(self, s):
        """``1/(p+1)! sum_N sigma_i ||U_i s||^(p+1)``."""
        total = 0.0
        p = self.p
        for i, (_, umap) in enumerate(self.problem.nice):
            total += self.sigma[i] * float(np.linalg.norm(umap.rows @ s)) ** (p + 1)
        return total / math.factorial(p + 1)


@dataclass
class Decrements:
    """Achieved, model and Taylor decreases over the final working set."""

    delta_f: float
    delta_m: float
    delta_T: float
    nice_delta_f: np.ndarray
    nice_delta_m: np.ndarray


def decrements(model, s, trial_nice_values, trial_h_values, assembled, positions_plus):
    """``(delta f, delta m, delta T)`` over ``W^+ = N  U  positions_plus``.

    ``trial_*_values`` are the element values ``f_i(U_i(x+s))`` and
    ``assembled`` the model evaluated at ``s``.
    """
    positions_plus = sorted(positions_plus)
    nice_df = model.nice_values - np.asarray(trial_nice_values, dtype=float)
    nice_dm = -np.asarray(assembled.nice_changes, dtype=float)
    df = float(np.sum(nice_df))
    dm = float(np.sum(nice_dm))
    for j in positions_plus:
        if j not in assembled.h_changes:
            raise ContractViolation(f"singular position {j} missing from the assembled model")
        df += model._h_base[j] - float(trial_h_values[j])
        dm -= assembled.h_changes[j]
    dT = dm + model.regularization_term(s)
    return Decrements(df, dm, dT, nice_df, nice_dm)
