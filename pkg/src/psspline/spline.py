"""Piecewise cubic functions on a Powell-Sabin refinement.

Smoothness and point-jet conditions are linear in the BB coefficients, so
they are assembled once as sparse operators acting on the flattened
``(6T * 10,)`` coefficient vector; checking a whole basis is then a single
sparse product.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .bezier import CubicPatch, bernstein, bernstein_gradient, blossom_weights, smoothness_conditions
from .mesh import PSRefinement

LOCATE_TOL = 1e-10


class OutsideDomainError(ValueError):
    """Evaluation point outside the triangulated domain."""


def _micro_affine(ps: PSRefinement):
    """Per-micro inverse affine maps: ``tau_{1,2} = inv @ (p - c2)``."""
    pts = ps.points[ps.micro.reshape(-1, 3)]
    m = np.stack([pts[:, 0] - pts[:, 2], pts[:, 1] - pts[:, 2]], axis=2)
    return np.linalg.inv(m), pts[:, 2]


def locate(ps: PSRefinement, points, tol: float = LOCATE_TOL, strict: bool = True) -> np.ndarray:
    """Global micro-triangle index containing each point.

    Macro-triangles are tested first, then their six micro-triangles, by
    barycentric sign with tolerance ``tol``; ties go to the lowest index.
    Points outside the domain raise :class:`OutsideDomainError`, or map to
    ``-1`` when ``strict`` is false.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tri = ps.base
    macro = tri.vertices[tri.triangles]
    m = np.stack([macro[:, 0] - macro[:, 2], macro[:, 1] - macro[:, 2]], axis=2)
    inv, origin = np.linalg.inv(m), macro[:, 2]
    found = np.full(len(pts), -1, dtype=np.int64)
    chunk = max(1, 2_000_000 // max(tri.n_triangles, 1))
    for s in range(0, len(pts), chunk):
        p = pts[s : s + chunk]
        l12 = np.einsum("tij,ntj->nti", inv, p[:, None, :] - origin[None])
        lmin = np.minimum(l12.min(axis=2), 1 - l12.sum(axis=2))
        ok = lmin >= -tol
        hit = ok.any(axis=1)
        found[s : s + chunk] = np.where(hit, ok.argmax(axis=1), -1)
    if strict and np.any(found < 0):
        bad = pts[found < 0][0]
        raise OutsideDomainError(f"point {bad.tolist()} is outside the domain")

    micro = np.full(len(pts), -1, dtype=np.int64)
    sel = found >= 0
    minv, morig = _micro_affine(ps)
    cand = 6 * found[sel, None] + np.arange(6)[None]
    rel = pts[sel, None, :] - morig[cand]
    l12 = np.einsum("nmij,nmj->nmi", minv[cand], rel)
    lmin = np.minimum(l12.min(axis=2), 1 - l12.sum(axis=2))
    # the macro test passed, so the most-inside micro is a valid fallback
    first = np.where((lmin >= -tol).any(axis=1), (lmin >= -tol).argmax(axis=1), lmin.argmax(axis=1))
    micro[sel] = cand[np.arange(len(cand)), first]
    return micro


def collocation_bb(ps: PSRefinement, points, micro=None, gradient: bool = False) -> sp.csr_matrix:
    """Sparse map from flattened BB coefficients to values (or gradients) at ``points``.

    With ``gradient=True`` the result has ``2 n`` rows: x-derivatives first,
    then y-derivatives.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if micro is None:
        micro = locate(ps, pts)
    n = len(pts)
    blocks = np.zeros((n, 10, 2)) if gradient else np.zeros((n, 10))
    for m in np.unique(micro):
        sel = micro == m
        corners = ps.micro_points(m)
        blocks[sel] = bernstein_gradient(corners, pts[sel]) if gradient else bernstein(corners, pts[sel])
    cols = (10 * micro[:, None] + np.arange(10)[None]).ravel()
    shape = (n, 10 * ps.n_micro)
    if not gradient:
        rows = np.repeat(np.arange(n), 10)
        return sp.csr_matrix((blocks.ravel(), (rows, cols)), shape=shape)
    gx = sp.csr_matrix((blocks[..., 0].ravel(), (np.repeat(np.arange(n), 10), cols)), shape=shape)
    gy = sp.csr_matrix((blocks[..., 1].ravel(), (np.repeat(np.arange(n), 10), cols)), shape=shape)
    return sp.vstack([gx, gy]).tocsr()


@dataclass(frozen=True, eq=False)
class SplineFunction:
    """One cubic patch per micro-triangle of ``ps``; ``coeffs`` has shape ``(6T, 10)``."""

    ps: PSRefinement
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(self.ps.n_micro, 10)
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_patch_function(cls, ps: PSRefinement, make_patch) -> "SplineFunction":
        return cls(ps, np.array([make_patch(ps.micro_points(m)).coeffs for m in range(ps.n_micro)]))

    def patch(self, m: int) -> CubicPatch:
        return CubicPatch(self.ps.micro_points(m), self.coeffs[m])

    @property
    def scale(self) -> float:
        return float(np.abs(self.coeffs).max())

    def __call__(self, points) -> np.ndarray:
        return eval_spline(self, points)

    def gradient(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = collocation_bb(self.ps, pts, gradient=True) @ self.coeffs.ravel()
        return np.stack([g[: len(pts)], g[len(pts) :]], axis=1)


def eval_spline(s: SplineFunction, points) -> np.ndarray:
    """Values of ``s`` at ``points``; raises :class:`OutsideDomainError` outside the domain."""
    return collocation_bb(s.ps, points) @ s.coeffs.ravel()


@dataclass(frozen=True)
class PSEdge:
    """An interior edge of the refinement between micro-triangles ``a`` and ``b``.

    ``kind`` is ``"vertex"`` for ``[v_i, v_ijk]``, ``"split"`` for
    ``[v_ij, v_ijk]`` and ``"macro"`` for half of an interior macro edge.
    """

    index: int
    kind: str
    macro: int
    a: int
    b: int
    p1: tuple
    p2: tuple


@lru_cache(maxsize=32)
def _ps_edges_cached(ps):
    tri = ps.base
    nv, nt = tri.n_vertices, tri.n_triangles
    edges = []
    for t in range(nt):
        for m in range(6):
            a, b = 6 * t + m, 6 * t + (m + 1) % 6
            shared = sorted(set(ps.micro[t, m]) & set(ps.micro[t, (m + 1) % 6]))
            # the shared edge always contains the split point v_ijk (index nv + t)
            other = [v for v in shared if v != nv + t][0]
            kind = "vertex" if other < nv else "split"
            edges.append((kind, t, a, b, other, nv + t))
    for e in np.flatnonzero(~tri.boundary):
        t0, t1 = tri.edge_triangles[e]
        for v in tri.edges[e]:
            ep = nv + nt + int(e)
            (a,) = [6 * t0 + m for m in range(6) if ps.micro[t0, m, 0] == v and ps.micro[t0, m, 1] == ep]
            (b,) = [6 * t1 + m for m in range(6) if ps.micro[t1, m, 0] == v and ps.micro[t1, m, 1] == ep]
            edges.append(("macro", t0, a, b, int(v), ep))
    return tuple(
        PSEdge(n, kind, t, a, b, tuple(ps.points[u]), tuple(ps.points[w]))
        for n, (kind, t, a, b, u, w) in enumerate(edges)
    )


def ps_interior_edges(ps: PSRefinement) -> tuple[PSEdge, ...]:
    """All refinement edges shared by two micro-triangles, in a fixed order."""
    return _ps_edges_cached(ps)


def _opposite(ps, m, p1, p2):
    for c in ps.micro_points(m):
        if not (np.array_equal(c, p1) or np.array_equal(c, p2)):
            return c
    raise AssertionError("degenerate micro-triangle")


@dataclass(frozen=True, eq=False)
class SmoothnessOperator:
    """Sparse rows ``row @ bb`` equal to blossom differences across PS edges."""

    matrix: sp.csr_matrix
    edge: np.ndarray
    cond_order: np.ndarray
    edges: tuple


def smoothness_operator(ps: PSRefinement, order: int = 2) -> SmoothnessOperator:
    rows, cols, vals, edge_of, order_of = [], [], [], [], []
    r = 0
    edges = ps_interior_edges(ps)
    for ed in edges:
        p1, p2 = np.array(ed.p1), np.array(ed.p2)
        qa, qb = _opposite(ps, ed.a, p1, p2), _opposite(ps, ed.b, p1, p2)
        for k, args in smoothness_conditions(p1, p2, qa, qb, order):
            for m, sign in ((ed.a, 1.0), (ed.b, -1.0)):
                rows += [r] * 10
                cols += range(10 * m, 10 * m + 10)
                vals += list(sign * blossom_weights(ps.micro_points(m), *args))
            edge_of.append(ed.index)
            order_of.append(k)
            r += 1
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(r, 10 * ps.n_micro))
    return SmoothnessOperator(mat, np.array(edge_of), np.array(order_of), edges)


def split_point_jet_operator(ps: PSRefinement) -> tuple[sp.csr_matrix, np.ndarray]:
    """Rows comparing ``b(v_ijk, x, y)`` of micro 1..5 against micro 0.

    ``x, y`` range over the macro corners, which pins down the whole 2-jet
    at the split point.  Returns the operator and the macro index per row.
    """
    tri = ps.base
    rows, cols, vals, macro = [], [], [], []
    r = 0
    for t in range(tri.n_triangles):
        c = ps.split_points[t]
        corners = tri.vertices[list(tri.corners(t))]
        ref = 6 * t
        for x, y in itertools.combinations_with_replacement(range(3), 2):
            w0 = blossom_weights(ps.micro_points(ref), c, corners[x], corners[y])
            for m in range(1, 6):
                w = blossom_weights(ps.micro_points(ref + m), c, corners[x], corners[y])
                rows += [r] * 20
                cols += list(range(10 * (ref + m), 10 * (ref + m) + 10)) + list(range(10 * ref, 10 * ref + 10))
                vals += list(w) + list(-w0)
                macro.append(t)
                r += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(r, 10 * ps.n_micro)), np.array(macro)


@dataclass
class GlobalSmoothnessReport:
    """Per-PS-edge maximum residual for each condition order."""

    order: int
    edges: tuple
    residuals: np.ndarray  # (n_edges, order + 1)
    split_point: np.ndarray  # (T,) 2-jet mismatch at v_ijk

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0

    def max_of(self, order: int, kind: str | None = None, macros=None) -> float:
        sel = np.ones(len(self.edges), dtype=bool)
        if kind is not None:
            sel &= np.array([e.kind == kind for e in self.edges])
        if macros is not None:
            sel &= np.isin([e.macro for e in self.edges], list(macros))
        vals = self.residuals[sel, order]
        return float(vals.max()) if vals.size else 0.0


def smoothness_residuals(op: SmoothnessOperator, bb: np.ndarray, order: int) -> np.ndarray:
    """Per-edge maxima of |conditions|; ``bb`` is ``(6T*10,)`` or ``(6T*10, n)``."""
    vals = np.abs(op.matrix @ bb)
    vals = vals.reshape(len(op.edge), -1)
    out = np.zeros((len(op.edges), order + 1, vals.shape[1]))
    np.maximum.at(out, (op.edge, op.cond_order), vals)
    return out[..., 0] if bb.ndim == 1 else out


def verify_global_smoothness(s: SplineFunction, order: int = 1) -> GlobalSmoothnessReport:
    op = smoothness_operator(s.ps, order)
    res = smoothness_residuals(op, s.coeffs.ravel(), order)
    jet, macro = split_point_jet_operator(s.ps)
    jet_res = np.zeros(s.ps.base.n_triangles)
    np.maximum.at(jet_res, macro, np.abs(jet @ s.coeffs.ravel()))
    return GlobalSmoothnessReport(order, op.edges, res, jet_res)


def point_in_domain(ps: PSRefinement, points, tol: float = LOCATE_TOL) -> np.ndarray:
    return locate(ps, points, tol, strict=False) >= 0

