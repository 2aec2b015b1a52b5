"""Built-in smooth element functions.

Every element works on its own low-dimensional vector ``z = U_i x`` and
returns dense, symmetric derivative tensors of shape ``(dim,) * order``.
Elements are immutable; ``kind`` and ``params()`` make them serializable.
"""

import math

import numpy as np


class SmoothElement:
    """Interface of a smooth element ``f_i``.

    Subclasses implement :meth:`value` and :meth:`derivative`.
    """

    kind = "abstract"

    def __init__(self, dim):
        if int(dim) < 1:
            raise ValueError(f"element dimension must be >= 1, got {dim}")
        self.dim = int(dim)

    def value(self, z):
        raise NotImplementedError

    def derivative(self, z, order):
        raise NotImplementedError

    def params(self):
        return {}

    def _check_order(self, order):
        if order < 1:
            raise ValueError(f"derivative order must be >= 1, got {order}")

    def __eq__(self, other):
        if type(self) is not type(other) or self.dim != other.dim:
            return False
        return _params_equal(self.params(), other.params())

    def __hash__(self):
        return hash((self.kind, self.dim))

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


def _params_equal(a, b):
    if a.keys() != b.keys():
        return False
    for key in a:
        if not np.array_equal(np.asarray(a[key], dtype=float), np.asarray(b[key], dtype=float)):
            return False
    return True


class ZeroElement(SmoothElement):
    """Identically zero element, used to repair the span of the nice maps."""

    kind = "zero"

    def value(self, z):
        return 0.0

    def derivative(self, z, order):
        self._check_order(order)
        return np.zeros((self.dim,) * order)


class QuadraticElement(SmoothElement):
    """``f(z) = 0.5 z^T Q z + c^T z + d`` with symmetric ``Q``."""

    kind = "quadratic"

    def __init__(self, Q, c=None, d=0.0):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be square")
        super().__init__(Q.shape[0])
        self.Q = 0.5 * (Q + Q.T)
        self.c = np.zeros(self.dim) if c is None else np.asarray(c, dtype=float).reshape(self.dim)
        self.d = float(d)

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.Q @ z + self.c @ z + self.d)

    def derivative(self, z, order):
        self._check_order(order)
        z = np.asarray(z, dtype=float)
        if order == 1:
            return self.Q @ z + self.c
        if order == 2:
            return self.Q.copy()
        return np.zeros((self.dim,) * order)

    def params(self):
        return {"Q": self.Q.tolist(), "c": self.c.tolist(), "d": self.d}


class ResidualPowerElement(SmoothElement):
    """Affine residual raised to an integer power: ``f(z) = (w^T z - b)^k``."""

    kind = "residual-power"

    def __init__(self, w, b=0.0, power=2):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        super().__init__(w.size)
        if int(power) != power or power < 1:
            raise ValueError(f"power must be a positive integer, got {power}")
        self.w = w
        self.b = float(b)
        self.power = int(power)

    def value(self, z):
        r = float(self.w @ np.asarray(z, dtype=float)) - self.b
        return r ** self.power

    def derivative(self, z, order):
        self._check_order(order)
        k = self.power
        if order > k:
            return np.zeros((self.dim,) * order)
        r = float(self.w @ np.asarray(z, dtype=float)) - self.b
        scale = math.factorial(k) / math.factorial(k - order) * r ** (k - order)
        out = np.asarray(scale)
        for _ in range(order):
            out = np.multiply.outer(out, self.w)
        return out

    def params(self):
        return {"w": self.w.tolist(), "b": self.b, "power": self.power}


class RosenbrockElement(SmoothElement):
    """Two-variable Rosenbrock coupling ``alpha (z2 - z1^2)^2 + (1 - z1)^2``."""

    kind = "rosenbrock"

    def __init__(self, alpha=100.0):
        super().__init__(2)
        self.alpha = float(alpha)

    def value(self, z):
        z1, z2 = float(z[0]), float(z[1])
        return self.alpha * (z2 - z1 * z1) ** 2 + (1.0 - z1) ** 2

    def derivative(self, z, order):
        self._check_order(order)
        a = self.alpha
        z1, z2 = float(z[0]), float(z[1])
        if order == 1:
            return np.array([
                -4.0 * a * z1 * (z2 - z1 * z1) - 2.0 * (1.0 - z1),
                2.0 * a * (z2 - z1 * z1),
            ])
        if order == 2:
            h12 = -4.0 * a * z1
            return np.array([[12.0 * a * z1 * z1 - 4.0 * a * z2 + 2.0, h12], [h12, 2.0 * a]])
        t = np.zeros((2,) * order)
        if order == 3:
            t[0, 0, 0] = 24.0 * a * z1
            for idx in ((0, 0, 1), (0, 1, 0), (1, 0, 0)):
                t[idx] = -4.0 * a
        elif order == 4:
            t[0, 0, 0, 0] = 24.0 * a
        return t

    def params(self):
        return {"alpha": self.alpha}


class PowerElement(SmoothElement):
    """``|t|^q`` treated as a smooth scalar element.

    Only valid on sets bounded away from ``t = 0``; this is what a singular
    term becomes after it is moved to the nice set because its kernel misses
    the feasible set.
    """

    kind = "power"

    def __init__(self, q):
        super().__init__(1)
        self.q = float(q)

    def value(self, z):
        return abs(float(np.asarray(z).reshape(-1)[0])) ** self.q

    def derivative(self, z, order):
        self._check_order(order)
        t = float(np.asarray(z).reshape(-1)[0])
        return np.full((1,) * order, singular_derivative(t, self.q, order))

    def params(self):
        return {"q": self.q}


def singular_derivative(t, q, order):
    """Closed-form ``d^j/dt^j |t|^q`` for ``t != 0``."""
    from .errors import SingularDerivativeError

    if t == 0.0:
        raise SingularDerivativeError(f"derivative of order {order} of |t|^{q} undefined at t = 0")
    coef = q
    for ell in range(1, order):
        coef *= q - ell
    sign = 1.0 if t > 0 else -1.0
    return coef * abs(t) ** (q - order) * sign ** order


ELEMENT_KINDS = {
    cls.kind: cls
    for cls in (ZeroElement, QuadraticElement, ResidualPowerElement, RosenbrockElement, PowerElement)
}


def element_from_params(kind, params, dim=None):
    """Rebuild an element from its ``kind`` and ``params`` dictionary."""
    if kind not in ELEMENT_KINDS:
        raise KeyError(kind)
    if kind == "zero":
        return ZeroElement(dim if dim is not None else params.get("dim", 1))
    return ELEMENT_KINDS[kind](**params)
