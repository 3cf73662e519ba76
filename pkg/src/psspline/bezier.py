"""Cubic Bernstein-Bezier patches on triangles.

Coefficients are indexed by multi-indices ``(a, b, c)`` with ``a+b+c = 3`` in
the fixed order ``300, 210, 201, 120, 111, 102, 030, 021, 012, 003``.  The
blossom is evaluated with three de Casteljau reductions, one per argument, so
arguments may lie anywhere in the plane (barycentric coordinates can be
negative).

Monomial coefficient vectors follow ``1, x, y, x^2, xy, y^2, x^3, x^2 y,
x y^2, y^3``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import barycentric_coords

SMOOTHNESS_RTOL = 1e-10


def multi_indices(degree: int) -> list[tuple[int, int, int]]:
    return [(a, b, degree - a - b) for a in range(degree, -1, -1) for b in range(degree - a, -1, -1)]


MULTI_INDICES = multi_indices(3)
MONOMIALS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)]


def _step_table(degree):
    pos = {m: n for n, m in enumerate(multi_indices(degree))}
    table = []
    for b in multi_indices(degree - 1):
        row = []
        for axis in range(3):
            up = list(b)
            up[axis] += 1
            row.append(pos[tuple(up)])
        table.append(row)
    return np.array(table)


_STEP = {n: _step_table(n) for n in (1, 2, 3)}
_TRINOMIAL = np.array([math.factorial(3) / math.prod(map(math.factorial, m)) for m in MULTI_INDICES])
_ALPHA = np.array(MULTI_INDICES)


def _de_casteljau_blossom(coeffs, taus):
    """Blossom from BB coefficients ``(10, *B)`` and three barycentric arrays ``(3, *B)``."""
    c = coeffs
    for n, tau in zip((3, 2, 1), taus):
        c = np.einsum("bl...,l...->b...", c[_STEP[n]], tau)
    return c[0]


def blossom_weights(triangle, p1, p2, p3) -> np.ndarray:
    """Linear weights ``w`` with ``blossom(P; p1, p2, p3) = w @ coeffs(P)``."""
    taus = [barycentric_coords(triangle, p)[..., None] for p in (p1, p2, p3)]
    return _de_casteljau_blossom(np.eye(10), taus)


def bernstein(triangle, points) -> np.ndarray:
    """Cubic Bernstein basis values at ``points``; shape ``(n, 10)``."""
    tau = barycentric_coords(triangle, np.atleast_2d(points))
    return _TRINOMIAL * np.prod(tau[:, None, :] ** _ALPHA[None], axis=2)


def bernstein_gradient(triangle, points) -> np.ndarray:
    """Gradients of the cubic Bernstein basis; shape ``(n, 10, 2)``."""
    tri = np.asarray(triangle, dtype=float)
    pts = np.atleast_2d(points)
    tau = barycentric_coords(tri, pts)
    # rows of grads: gradient of each barycentric coordinate
    m = np.array([tri[0] - tri[2], tri[1] - tri[2]]).T
    inv = np.linalg.inv(m)
    grads = np.vstack([inv, -inv.sum(axis=0)])
    quad = multi_indices(2)
    quad_coef = np.array([2 / math.prod(map(math.factorial, q)) for q in quad])
    b2 = quad_coef * np.prod(tau[:, None, :] ** np.array(quad)[None], axis=2)
    out = np.zeros((len(pts), 10, 2))
    for q, beta in enumerate(quad):
        for axis in range(3):
            up = list(beta)
            up[axis] += 1
            out[:, MULTI_INDICES.index(tuple(up))] += 3 * b2[:, q, None] * grads[axis]
    return out


def polarize(mono, p1, p2, p3):
    """Blossom of a cubic given in monomial form, by direct polarization.

    Each monomial ``x^a y^b`` is homogenized to three factors
    (``x``/``y``/``1``) and averaged over the six assignments of the
    arguments to the factors.  Points may carry leading batch dimensions.
    """
    mono = np.asarray(mono, dtype=float)
    pts = [np.asarray(p, dtype=float) for p in (p1, p2, p3)]

    def coord(p, f):
        return np.ones(p.shape[:-1]) if f == 2 else p[..., f]

    total = 0.0
    for coef, (a, b) in zip(mono, MONOMIALS):
        if coef == 0:
            continue
        factors = [0] * a + [1] * b + [2] * (3 - a - b)
        acc = 0.0
        for perm in itertools.permutations(range(3)):
            acc = acc + coord(pts[perm[0]], factors[0]) * coord(pts[perm[1]], factors[1]) * coord(
                pts[perm[2]], factors[2]
            )
        total = total + coef * acc / 6.0
    return total


def eval_monomials(mono, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    return sum(c * x**a * y**b for c, (a, b) in zip(np.asarray(mono, dtype=float), MONOMIALS))


@dataclass(frozen=True, eq=False)
class CubicPatch:
    """A cubic polynomial stored by its BB coefficients over ``triangle``."""

    triangle: np.ndarray
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "triangle", np.asarray(self.triangle, dtype=float).reshape(3, 2))
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float).reshape(10))

    def blossom(self, p1, p2, p3) -> float:
        taus = [barycentric_coords(self.triangle, p) for p in (p1, p2, p3)]
        taus = [np.moveaxis(t, -1, 0) for t in taus]
        value = _de_casteljau_blossom(
            self.coeffs.reshape((10,) + (1,) * (taus[0].ndim - 1)), taus
        )
        return float(value) if np.ndim(value) == 0 else value

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return self.blossom(p, p, p)

    eval = __call__

    def gradient(self, p) -> np.ndarray:
        g = np.einsum("nkd,k->nd", bernstein_gradient(self.triangle, p), self.coeffs)
        return g[0] if np.ndim(p) == 1 else g

    def directional_derivative(self, p, d, order: int = 1, d2=None) -> float:
        """Exact first or second directional derivative from blossom values.

        ``D_d P(p) = 3 (b(p,p,p+d) - P(p))`` and
        ``D_d D_e P(p) = 6 (b(p,p+d,p+e) - b(p,p,p+d) - b(p,p,p+e) + P(p))``.
        """
        p = np.asarray(p, dtype=float)
        d = np.asarray(d, dtype=float)
        if order == 1:
            return 3.0 * (self.blossom(p, p, p + d) - self(p))
        if order == 2:
            e = d if d2 is None else np.asarray(d2, dtype=float)
            return 6.0 * (
                self.blossom(p, p + d, p + e) - self.blossom(p, p, p + d) - self.blossom(p, p, p + e) + self(p)
            )
        raise ValueError("order must be 1 or 2")


def blossom(patch: CubicPatch, p1, p2, p3) -> float:
    return patch.blossom(p1, p2, p3)


def from_polynomial(mono, triangle) -> CubicPatch:
    """BB form of a cubic on ``triangle``: coefficient ``alpha`` is the blossom at the corner multiset."""
    tri = np.asarray(triangle, dtype=float)
    coeffs = []
    for alpha in MULTI_INDICES:
        args = [tri[n] for n, a in enumerate(alpha) for _ in range(a)]
        coeffs.append(polarize(mono, *args))
    return CubicPatch(tri, np.array(coeffs))


def smoothness_conditions(p1, p2, qa, qb, order: int):
    """Blossom argument triples whose equality across an edge gives C^order.

    Returns a list of ``(order_of_condition, (a1, a2, a3))``.  ``p1, p2`` span
    the common edge, ``qa`` and ``qb`` are the opposite corners of the two
    triangles.  Order 0 conditions compare the four edge coefficients, order 1
    uses ``qa`` as off-edge point and order 2 pairs ``qa`` with ``qb``.
    """
    conds = [(0, (p1, p1, p1)), (0, (p1, p1, p2)), (0, (p1, p2, p2)), (0, (p2, p2, p2))]
    if order >= 1:
        conds += [(1, (p1, p1, qa)), (1, (p1, p2, qa)), (1, (p2, p2, qa))]
    if order >= 2:
        conds += [(2, (p1, qa, qb)), (2, (p2, qa, qb))]
    return conds


@dataclass
class SmoothnessReport:
    """Absolute blossom deviations of the joint conditions up to ``order``.

    ``orders[n]`` gives the smoothness order that condition ``n`` belongs to.
    """

    order: int
    residuals: np.ndarray
    orders: np.ndarray
    scale: float = 1.0

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0

    def max_of_order(self, k: int) -> float:
        sel = self.residuals[self.orders == k]
        return float(sel.max()) if sel.size else 0.0

    def passed(self, rtol: float = SMOOTHNESS_RTOL) -> bool:
        return self.max_residual <= rtol * max(self.scale, 1e-300)


def _opposite_corner(tri, p1, p2):
    def on_line(c):
        return abs((p2 - p1)[0] * (c - p1)[1] - (p2 - p1)[1] * (c - p1)[0])

    scale = np.linalg.norm(p2 - p1)
    dist = np.array([on_line(c) / scale for c in tri])
    size = np.ptp(tri, axis=0).max()
    if np.sum(dist <= 1e-9 * size) != 2:
        raise ValueError("edge is not an edge of the triangle")
    return tri[int(np.argmax(dist))]


class NotContinuousError(ValueError):
    """Two patches do not even join continuously along the edge."""


def check_smoothness(
    patch_a: CubicPatch, patch_b: CubicPatch, shared_edge, order: int = 1, strict: bool = True
) -> SmoothnessReport:
    """Blossom residuals for ``C^order`` smoothness of two patches across ``shared_edge``.

    Raises
    ------
    ValueError
        If ``shared_edge`` is not an edge of both triangles, or the
        triangles lie on the same side of it.
    NotContinuousError
        If ``order >= 1``, ``strict`` is set and the C0 residual already
        exceeds ``SMOOTHNESS_RTOL * scale``.
    """
    p1, p2 = (np.asarray(p, dtype=float) for p in shared_edge)
    qa = _opposite_corner(patch_a.triangle, p1, p2)
    qb = _opposite_corner(patch_b.triangle, p1, p2)
    d = p2 - p1
    sa = d[0] * (qa - p1)[1] - d[1] * (qa - p1)[0]
    sb = d[0] * (qb - p1)[1] - d[1] * (qb - p1)[0]
    if sa * sb >= 0:
        raise ValueError("patches overlap across the edge")
    res, orders = [], []
    for k, args in smoothness_conditions(p1, p2, qa, qb, order):
        res.append(abs(patch_a.blossom(*args) - patch_b.blossom(*args)))
        orders.append(k)
    scale = float(max(np.abs(patch_a.coeffs).max(), np.abs(patch_b.coeffs).max()))
    report = SmoothnessReport(order, np.array(res), np.array(orders), scale)
    if strict and order >= 1 and report.max_of_order(0) > SMOOTHNESS_RTOL * max(scale, 1e-300):
        raise NotContinuousError(f"C0 residual {report.max_of_order(0):.3g} on the shared edge")
    return report
