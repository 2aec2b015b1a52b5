"""Closed convex feasible sets with Euclidean projection oracles.

Boxes, balls, single half-spaces and slabs project exactly.  Polyhedra given
by several half-spaces and general intersections use Dykstra's alternating
projections.  Restrictions of a set to a shifted subspace ``x + span(B)``
(needed by the criticality measure) are exact whenever the geometry allows
it and fall back to Dykstra otherwise.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySetError, ProjectionError

_log = logging.getLogger(__name__)

DYKSTRA_TOL = 1e-10
DYKSTRA_MAX_SWEEPS = 10_000
MEMBER_TOL = 1e-9


def dykstra(y, projections, tol=DYKSTRA_TOL, max_sweeps=DYKSTRA_MAX_SWEEPS):
    """Project ``y`` onto the intersection of sets given by their projections.

    Stops when one full sweep moves the iterate by at most ``tol`` and every
    set is violated by at most ``tol``.
    """
    x = np.array(y, dtype=float)
    if len(projections) == 1:
        return projections[0](x)
    incs = [np.zeros_like(x) for _ in projections]
    residual = np.inf
    for sweep in range(1, max_sweeps + 1):
        x_start = x
        for k, proj in enumerate(projections):
            z = x + incs[k]
            x = proj(z)
            incs[k] = z - x
        move = np.linalg.norm(x - x_start)
        if move <= tol:
            residual = max(np.linalg.norm(x - proj(x)) for proj in projections)
            if residual <= tol:
                return x
    raise ProjectionError(f"Dykstra did not converge in {max_sweeps} sweeps (residual {residual:.3e})",
                          residual=residual, sweeps=max_sweeps)


class FeasibleSet:
    """Base class; subclasses provide ``project``, ``contains`` and ``witness``."""

    kind = "abstract"

    def __init__(self, n):
        self.n = int(n)

    def project(self, y):
        raise NotImplementedError

    def contains(self, x, tol=MEMBER_TOL):
        raise NotImplementedError

    def witness(self):
        raise NotImplementedError

    def line_interval(self, x, b):
        """Interval ``[t_lo, t_hi]`` of ``t`` with ``x + t b`` in the set (``x`` a member)."""
        raise NotImplementedError

    def atoms(self):
        """Sets whose intersection is this one, each with an accurate projection."""
        return [self]

    def linear_constraints(self):
        """``(A, b)`` with the set equal to ``{x : A x <= b}``, or None if not polyhedral."""
        return None

    def kernel_centered_analytic(self, u):
        """True when ``P_ker(u)[F] ⊆ F`` is known analytically, None when undecided."""
        return None

    def to_descriptor(self):
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.to_descriptor() == other.to_descriptor()

    def __hash__(self):
        return hash(self.kind)


def _interval_from_linear(alpha, beta, lo, hi):
    """Interval of t with lo <= alpha + t * beta <= hi (elementwise, intersected)."""
    alpha = np.atleast_1d(alpha)
    beta = np.atleast_1d(beta)
    lo = np.broadcast_to(lo, alpha.shape)
    hi = np.broadcast_to(hi, alpha.shape)
    t_lo, t_hi = -np.inf, np.inf
    moving = beta != 0.0
    if np.any(moving):
        with np.errstate(invalid="ignore"):
            a = (lo[moving] - alpha[moving]) / beta[moving]
            b = (hi[moving] - alpha[moving]) / beta[moving]
        lower = np.where(np.isnan(a), -np.inf, np.minimum(a, b))
        upper = np.where(np.isnan(b), np.inf, np.maximum(a, b))
        t_lo = float(np.max(lower))
        t_hi = float(np.min(upper))
    return min(t_lo, 0.0), max(t_hi, 0.0)


class Box(FeasibleSet):
    """``{x : lo <= x <= hi}``; infinite bounds allowed."""

    kind = "box"

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float).reshape(-1)
        hi = np.asarray(hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have the same shape")
        if np.any(lo > hi):
            raise EmptySetError("box has lo > hi in some coordinate")
        super().__init__(lo.size)
        self.lo = lo
        self.hi = hi

    @classmethod
    def free(cls, n):
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @property
    def is_free(self):
        return bool(np.all(np.isinf(self.lo)) and np.all(np.isinf(self.hi)))

    def project(self, y):
        return np.clip(y, self.lo, self.hi)

    def contains(self, x, tol=MEMBER_TOL):
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def witness(self):
        return np.clip(np.zeros(self.n), self.lo, self.hi)

    def line_interval(self, x, b):
        return _interval_from_linear(x, b, self.lo, self.hi)

    def linear_constraints(self):
        eye = np.eye(self.n)
        up, down = np.isfinite(self.hi), np.isfinite(self.lo)
        return np.vstack([eye[up], -eye[down]]), np.concatenate([self.hi[up], -self.lo[down]])

    def kernel_centered_analytic(self, u):
        support = np.flatnonzero(np.abs(u) > 1e-14)
        if len(support) == 1:
            j = support[0]
            return bool(self.lo[j] <= 0.0 <= self.hi[j]) or None
        if self.is_free:
            return True
        return None

    def to_descriptor(self):
        if self.is_free:
            return {"kind": "free", "n": self.n}
        enc = lambda v: [None if np.isinf(t) else float(t) for t in v]  # noqa: E731
        return {"kind": "box", "lo": enc(self.lo), "hi": enc(self.hi)}

    def __repr__(self):
        return "Box(free)" if self.is_free else f"Box(n={self.n})"


class Ball(FeasibleSet):
    """``{x : ||x - center|| <= radius}``."""

    kind = "ball"

    def __init__(self, center, radius):
        center = np.asarray(center, dtype=float).reshape(-1)
        super().__init__(center.size)
        if radius < 0:
            raise EmptySetError("ball radius must be non-negative")
        self.center = center
        self.radius = float(radius)

    def project(self, y):
        v = y - self.center
        nv = np.linalg.norm(v)
        if nv <= self.radius:
            return np.array(y, dtype=float)
        return self.center + v * (self.radius / nv)

    def contains(self, x, tol=MEMBER_TOL):
        return bool(np.linalg.norm(x - self.center) <= self.radius + tol)

    def witness(self):
        return self.center.copy()

    def line_interval(self, x, b):
        bb = float(b @ b)
        if bb == 0.0:
            return -np.inf, np.inf
        w = x - self.center
        beta = float(w @ b) / bb
        disc = beta * beta - (float(w @ w) - self.radius ** 2) / bb
        root = np.sqrt(max(disc, 0.0))
        return min(-beta - root, 0.0), max(-beta + root, 0.0)

    def kernel_centered_analytic(self, u):
        return True if np.allclose(self.center, 0.0, atol=1e-14) else None

    def to_descriptor(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}

    def __repr__(self):
        return f"Ball(n={self.n}, radius={self.radius})"


class Slab(FeasibleSet):
    """``{x : lo <= a^T x <= hi}``; a single half-space when one side is infinite."""

    kind = "affine-slab"

    def __init__(self, a, lo=-np.inf, hi=np.inf):
        a = np.asarray(a, dtype=float).reshape(-1)
        super().__init__(a.size)
        if not np.any(a):
            raise ValueError("slab normal must be non-zero")
        if lo > hi:
            raise EmptySetError("slab has lo > hi")
        self.a = a
        self.lo = float(lo)
        self.hi = float(hi)
        self._aa = float(a @ a)

    def project(self, y):
        v = float(self.a @ y)
        target = min(max(v, self.lo), self.hi)
        if target == v:
            return np.array(y, dtype=float)
        return y + (target - v) / self._aa * self.a

    def contains(self, x, tol=MEMBER_TOL):
        v = float(self.a @ x)
        scale = np.sqrt(self._aa)
        return bool(self.lo - tol * scale <= v <= self.hi + tol * scale)

    def witness(self):
        return self.a * (min(max(0.0, self.lo), self.hi) / self._aa)

    def line_interval(self, x, b):
        return _interval_from_linear(float(self.a @ x), float(self.a @ b), self.lo, self.hi)

    def linear_constraints(self):
        rows, rhs = [], []
        if np.isfinite(self.hi):
            rows.append(self.a)
            rhs.append(self.hi)
        if np.isfinite(self.lo):
            rows.append(-self.a)
            rhs.append(-self.lo)
        return np.array(rows).reshape(-1, self.n), np.array(rhs)

    def kernel_centered_analytic(self, u):
        au = float(self.a @ u)
        if abs(au) <= 1e-14 * np.linalg.norm(self.a):
            return True
        if abs(abs(au) - np.linalg.norm(self.a)) <= 1e-12 * np.linalg.norm(self.a):
            return True if self.lo <= 0.0 <= self.hi else None
        return None

    def to_descriptor(self):
        enc = lambda t: None if np.isinf(t) else float(t)  # noqa: E731
        return {"kind": "affine-slab", "a": self.a.tolist(), "lo": enc(self.lo), "hi": enc(self.hi)}


class Halfspaces(FeasibleSet):
    """Polyhedron ``{x : A x <= b}`` projected by Dykstra over its rows."""

    kind = "halfspace-intersection"

    def __init__(self, A, b, tol=DYKSTRA_TOL, max_sweeps=DYKSTRA_MAX_SWEEPS):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise ValueError("A and b sizes differ")
        super().__init__(A.shape[1])
        self.A = A
        self.b = b
        self.tol = tol
        self.max_sweeps = max_sweeps
        self._rows = [Slab(a, -np.inf, bi) for a, bi in zip(A, b)]
        self._witness = _lp_witness(A, b)

    def atoms(self):
        return list(self._rows)

    def linear_constraints(self):
        return self.A.copy(), self.b.copy()

    def project(self, y):
        if self.contains(y, tol=0.0):
            return np.array(y, dtype=float)
        return dykstra(y, [r.project for r in self._rows], self.tol, self.max_sweeps)

    def contains(self, x, tol=MEMBER_TOL):
        return all(r.contains(x, tol) for r in self._rows)

    def witness(self):
        return self._witness.copy()

    def line_interval(self, x, b):
        lo, hi = -np.inf, np.inf
        for r in self._rows:
            a, c = r.line_interval(x, b)
            lo, hi = max(lo, a), min(hi, c)
        return lo, hi

    def kernel_centered_analytic(self, u):
        flags = [r.kernel_centered_analytic(u) for r in self._rows]
        return True if all(flags) else None

    def to_descriptor(self):
        return {"kind": "halfspace-intersection", "A": self.A.tolist(), "b": self.b.tolist()}


def _lp_witness(A, b):
    from scipy.optimize import linprog

    n = A.shape[1]
    res = linprog(np.zeros(n), A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
    if res.status != 0:
        raise EmptySetError(f"polyhedron appears empty (linprog status {res.status}: {res.message})")
    return np.asarray(res.x, dtype=float)


class Intersection(FeasibleSet):
    """Intersection of convex sets, projected with Dykstra over their atoms."""

    kind = "intersection"

    def __init__(self, parts, tol=DYKSTRA_TOL, max_sweeps=DYKSTRA_MAX_SWEEPS):
        parts = list(parts)
        if not parts:
            raise ValueError("intersection needs at least one part")
        n = parts[0].n
        if any(p.n != n for p in parts):
            raise ValueError("intersection parts live in different dimensions")
        super().__init__(n)
        self.parts = parts
        self.tol = tol
        self.max_sweeps = max_sweeps
        self._atoms = [a for p in parts for a in p.atoms()]
        try:
            w = dykstra(parts[0].witness(), [a.project for a in self._atoms], tol, max_sweeps)
        except ProjectionError as exc:
            raise EmptySetError("could not find a point in the intersection") from exc
        if not self.contains(w, tol=1e-8):
            raise EmptySetError("intersection appears empty")
        self._witness = w

    def atoms(self):
        return list(self._atoms)

    def linear_constraints(self):
        return _stack_constraints([p.linear_constraints() for p in self.parts], None)

    def project(self, y):
        if self.contains(y, tol=0.0):
            return np.array(y, dtype=float)
        return dykstra(y, [a.project for a in self._atoms], self.tol, self.max_sweeps)

    def contains(self, x, tol=MEMBER_TOL):
        return all(a.contains(x, tol) for a in self._atoms)

    def witness(self):
        return self._witness.copy()

    def line_interval(self, x, b):
        lo, hi = -np.inf, np.inf
        for a in self._atoms:
            t0, t1 = a.line_interval(x, b)
            lo, hi = max(lo, t0), min(hi, t1)
        return lo, hi

    def kernel_centered_analytic(self, u):
        flags = [p.kernel_centered_analytic(u) for p in self.parts]
        return True if all(flags) else None

    def to_descriptor(self):
        return {"kind": "intersection", "parts": [p.to_descriptor() for p in self.parts]}


class Product(FeasibleSet):
    """Cartesian product ``F_1 x F_2 x ...`` over consecutive coordinate blocks."""

    kind = "cartesian-product"

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise ValueError("product needs at least one factor")
        super().__init__(sum(p.n for p in parts))
        self.parts = parts
        self._slices = []
        start = 0
        for p in parts:
            self._slices.append(slice(start, start + p.n))
            start += p.n

    def project(self, y):
        out = np.empty(self.n)
        for p, sl in zip(self.parts, self._slices):
            out[sl] = p.project(y[sl])
        return out

    def contains(self, x, tol=MEMBER_TOL):
        return all(p.contains(x[sl], tol) for p, sl in zip(self.parts, self._slices))

    def witness(self):
        return np.concatenate([p.witness() for p in self.parts])

    def line_interval(self, x, b):
        lo, hi = -np.inf, np.inf
        for p, sl in zip(self.parts, self._slices):
            if np.any(b[sl]):
                t0, t1 = p.line_interval(x[sl], b[sl])
                lo, hi = max(lo, t0), min(hi, t1)
        return lo, hi

    def kernel_centered_analytic(self, u):
        touched = [(p, sl) for p, sl in zip(self.parts, self._slices) if np.any(np.abs(u[sl]) > 1e-14)]
        if len(touched) == 1:
            p, sl = touched[0]
            return p.kernel_centered_analytic(u[sl] / np.linalg.norm(u[sl]))
        return None

    def to_descriptor(self):
        return {"kind": "cartesian-product", "parts": [p.to_descriptor() for p in self.parts]}

    def linear_constraints(self):
        return _stack_constraints([p.linear_constraints() for p in self.parts], self._slices, self.n)


def _stack_constraints(blocks, slices, n=None):
    if any(b is None for b in blocks):
        return None
    if slices is None:
        return np.vstack([A for A, _ in blocks]), np.concatenate([b for _, b in blocks])
    rows = []
    for (A, _), sl in zip(blocks, slices):
        full = np.zeros((A.shape[0], n))
        full[:, sl] = A
        rows.append(full)
    return np.vstack(rows), np.concatenate([b for _, b in blocks])


def least_distance(G, h):
    """Smallest-norm ``z`` with ``G z <= h`` (least-distance programming via NNLS).

    Returns None when the constraints look infeasible or the NNLS solution
    does not satisfy them.
    """
    from scipy.optimize import nnls

    m, k = G.shape
    if m == 0:
        return np.zeros(k)
    # drop rows without a bound; the problem is positively homogeneous in h
    keep = h < np.inf
    G, h = G[keep], h[keep]
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    h = h / scale
    m = G.shape[0]
    if m == 0:
        return np.zeros(k)
    # min ||z|| s.t. (-G) z >= -h  <=>  NNLS on E = [(-G)^T; (-h)^T], f = e_{k+1}
    E = np.vstack([-G.T, -h[None, :]])
    f = np.zeros(k + 1)
    f[-1] = 1.0
    u, _ = nnls(E, f, maxiter=50 * (m + k + 1))
    r = E @ u - f
    if abs(r[-1]) <= 1e-14:
        return None
    z = -r[:k] / r[-1]
    # reject inaccurate solutions so the caller can fall back to Dykstra
    if np.max(G @ z - h) > 1e-9 * max(1.0, float(np.linalg.norm(z))):
        return None
    return scale * z


_KIND_ALIASES = {
    "halfspaces": "halfspace-intersection",
    "slab": "affine-slab",
    "product": "cartesian-product",
}


def _decode(v, default):
    return default if v is None else float(v)


def set_from_descriptor(desc, n=None):
    """Build a FeasibleSet from a ``psarp-problem/1`` set descriptor."""
    kind = _KIND_ALIASES.get(desc["kind"], desc["kind"])
    if kind == "free":
        return Box.free(int(desc.get("n", n)))
    if kind == "box":
        lo = [_decode(v, -np.inf) for v in desc["lo"]]
        hi = [_decode(v, np.inf) for v in desc["hi"]]
        return Box(lo, hi)
    if kind == "ball":
        return Ball(desc["center"], desc["radius"])
    if kind == "affine-slab":
        return Slab(desc["a"], _decode(desc.get("lo"), -np.inf), _decode(desc.get("hi"), np.inf))
    if kind == "halfspace-intersection":
        return Halfspaces(desc["A"], desc["b"])
    if kind == "intersection":
        return Intersection([set_from_descriptor(p, n) for p in desc["parts"]])
    if kind == "cartesian-product":
        return Product([set_from_descriptor(p) for p in desc["parts"]])
    raise ValueError(f"unknown feasible set kind {desc['kind']!r}")


def project(fset, y):
    """Euclidean projection of ``y`` onto ``fset``."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    return fset.project(y)


def is_coordinate_basis(basis, tol=1e-14):
    """True when every column of ``basis`` is a signed coordinate vector."""
    if basis.size == 0:
        return True
    nz = np.abs(basis) > tol
    return bool(np.all(nz.sum(axis=0) == 1) and np.allclose(np.abs(basis[nz]), 1.0))


def shifted_projector(fset, x, basis):
    """Map ``y -> project_shifted_subspace(fset, x, basis, y)`` with the geometry set up once.

    Repeated projections at the same ``(x, basis)`` (as in the bisection of
    the criticality measure) then skip the case analysis.
    """
    basis = np.asarray(basis, dtype=float)
    x = np.asarray(x, dtype=float)
    k = basis.shape[1]
    if k == 0:
        return lambda y: np.zeros(0)
    if isinstance(fset, Box) and fset.is_free:
        return lambda y: np.array(y, dtype=float).reshape(-1)
    if isinstance(fset, Box) and is_coordinate_basis(basis):
        support = np.any(basis != 0.0, axis=1)
        lo, hi = fset.lo[support] - x[support], fset.hi[support] - x[support]

        def coord(y):
            d = basis @ np.asarray(y, dtype=float).reshape(-1)
            d[support] = np.clip(d[support], lo, hi)
            return basis.T @ d
        return coord
    if k == 1:
        lo, hi = fset.line_interval(x, basis[:, 0])
        return lambda y: np.array([min(max(float(np.asarray(y).reshape(-1)[0]), lo), hi)])
    if k == fset.n and (isinstance(fset, (Box, Ball)) or fset.linear_constraints() is None):
        return lambda y: basis.T @ (fset.project(x + basis @ np.asarray(y, dtype=float).reshape(-1)) - x)
    if isinstance(fset, Ball):
        yc = basis.T @ (fset.center - x)
        off = fset.center - x - basis @ yc
        rad = np.sqrt(max(fset.radius ** 2 - float(off @ off), 0.0))

        def ball(y):
            y = np.array(y, dtype=float).reshape(-1)
            v = y - yc
            nv = np.linalg.norm(v)
            return y if nv <= rad else yc + v * (rad / nv)
        return ball
    lin = fset.linear_constraints()
    proj_sub = lambda z: x + basis @ (basis.T @ (z - x))  # noqa: E731
    atoms = fset.atoms()
    if lin is not None:
        A, b = lin
        G = A @ basis
        base_slack = b - A @ x
    else:
        G = None

    def general(y):
        y = np.asarray(y, dtype=float).reshape(-1)
        if G is not None:
            # c = y + z with A (x + B c) <= b, z of least norm
            z = least_distance(G, base_slack - G @ y)
            if z is not None:
                return y + z
        z = dykstra(x + basis @ y, [proj_sub] + [a.project for a in atoms])
        return basis.T @ (z - x)
    return general


def project_shifted_subspace(fset, x, basis, y):
    """``argmin ||d - B y||`` over ``d in span(B)``, ``x + d in fset``, in basis coordinates.

    ``basis`` is an ``(n, k)`` matrix with orthonormal columns and ``y`` a
    length-``k`` coefficient vector; the result is a length-``k`` vector.
    """
    return shifted_projector(fset, x, basis)(y)


@dataclass
class KernelCenteredCertificate:
    """Per singular map: kernel-centered flag (True/False/None for unknown).

    ``distances[i]`` is the gap between ``ker(U_i)`` and the set when they are
    disjoint (the element can then be treated as smooth), and
    ``witnesses[i]`` a member whose kernel projection leaves the set.
    """

    flags: list
    distances: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)

    @property
    def disjoint(self):
        return sorted(self.distances)

    @property
    def violations(self):
        return sorted(self.witnesses)

    @property
    def certified(self):
        return all(f is True for f in self.flags)


def kernel_distance(fset, u, iters=10_000, tol=1e-12):
    """Distance between the hyperplane ``ker(u)`` and ``fset`` by alternating projections."""
    u = np.asarray(u, dtype=float).reshape(-1)
    u = u / np.linalg.norm(u)
    a = fset.witness()
    gap = np.inf
    for _ in range(iters):
        h = a - (u @ a) * u
        a_new = fset.project(h)
        gap_new = np.linalg.norm(a_new - h)
        if abs(gap - gap_new) <= tol and np.linalg.norm(a_new - a) <= tol:
            a = a_new
            gap = gap_new
            break
        a, gap = a_new, gap_new
    return float(gap), a


def _sample_members(fset, count, rng):
    w = fset.witness()
    scales = np.geomspace(1e-2, 1e2, 5)
    pts = [w]
    while len(pts) < count:
        scale = scales[len(pts) % len(scales)]
        pts.append(fset.project(w + scale * rng.standard_normal(fset.n)))
    return pts


def check_kernel_centered(fset, maps, samples=1000, seed=0):
    """Certify ``P_ker(U_i)[F] ⊆ F`` for each single-row map in ``maps``."""
    rng = np.random.default_rng(seed)
    flags, distances, witnesses = [], {}, {}
    members = None
    for i, umap in enumerate(maps):
        u = np.asarray(getattr(umap, "rows", umap), dtype=float).reshape(-1)
        u = u / np.linalg.norm(u)
        gap, nearest = kernel_distance(fset, u)
        if gap > 1e-8:
            flags.append(False)
            distances[i] = gap
            continue
        analytic = fset.kernel_centered_analytic(u)
        if analytic:
            flags.append(True)
            continue
        if members is None:
            members = _sample_members(fset, samples, rng)
        verdict = None
        for m in members:
            pk = m - (u @ m) * u
            if not fset.contains(pk, tol=1e-8):
                verdict = False
                witnesses[i] = m
                break
        flags.append(verdict)
    return KernelCenteredCertificate(flags, distances, witnesses)
