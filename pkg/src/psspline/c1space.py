"""The C1 cubic Powell-Sabin spline space and its B-spline basis.

Splines are represented by their dual coefficients.  Three kinds of dual
functionals are used, each a blossom value of one micro-patch:

* vertex ``("v", i, r)``: ``b(v_i, v_i, v_i + 3 (q_{i,r} - v_i))``;
* triangle ``("t", a, b, c)``: ``b(v_a, v_b, v_abc)`` on micro ``(a,b,c)``;
* boundary edge ``("e", a, b)``: ``b(v_a, v_b, v_ab)`` on the micro-triangle
  containing ``[v_a, v_ab]``.

Canonical order: vertex block (vertex index, then ``r = 1, 2, 3``), triangle
block (macro index, then the micro cycle of :mod:`psspline.mesh`), boundary
edge block (sorted edge, orientation ``(i, j)`` before ``(j, i)``).

The BB net of a spline is built per macro-triangle from 21 local values: the
9 vertex functionals, the 6 own triangle functionals, and 6 values
``b(v_a, v_b, v_ab)`` which are either boundary-edge functionals or the
``mu``-blend of the triangle functionals on both sides of an interior edge.
The local space (C1 cubics on one 6-split) is the null space of the interior
C0/C1 conditions; the 21 functionals restricted to it give an invertible
21 x 21 matrix.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .bezier import CubicPatch, blossom_weights, polarize, smoothness_conditions
from .mesh import PSRefinement, barycentric_coords
from .spline import SplineFunction, collocation_bb, smoothness_operator, smoothness_residuals

logger = logging.getLogger(__name__)

LOCAL_COND_LIMIT = 1e12
Q_MARGIN = 1.3


class LocalSolveError(RuntimeError):
    """The local 21 x 21 system of a macro-triangle is singular or ill-conditioned."""


class NotC1Error(ValueError):
    """A spline handed to the dual functionals is not C1 within tolerance."""


@dataclass(frozen=True, eq=False)
class DualFunctional:
    """Blossom of micro-patch ``micro`` at the three rows of ``points``."""

    kind: str
    label: tuple
    micro: int
    points: np.ndarray = field(repr=False)

    def weights(self, ps: PSRefinement) -> np.ndarray:
        return blossom_weights(ps.micro_points(self.micro), *self.points)

    def of_polynomial(self, mono) -> float:
        return float(polarize(mono, *self.points))


def threads_from_env(threads: int | None = None) -> int:
    env = os.environ.get("PSPLINE_THREADS")
    if env:
        return max(1, int(env))
    return threads or os.cpu_count() or 1


def mandated_points(ps: PSRefinement, i: int) -> np.ndarray:
    """Points the vertex triangle of ``v_i`` must contain."""
    tri = ps.base
    v = tri.vertices[i]
    pts = [v]
    pts += [2 / 3 * v + 1 / 3 * ps.split_points[t] for t in tri.vertex_triangles(i)]
    pts += [2 / 3 * v + 1 / 3 * ps.edge_points[e] for e, (a, b) in enumerate(tri.edges) if i in (a, b)]
    return np.array(pts)


def choose_vertex_triangles(ps: PSRefinement, margin: float = Q_MARGIN) -> np.ndarray:
    """Equilateral vertex triangles ``q_i``; shape ``(V, 3, 2)``.

    Centred at the centroid ``c`` of the mandated points, one corner along
    ``+x``, with inradius ``margin`` times the largest distance from ``c`` to
    a mandated point, so containment holds with a strict margin.
    """
    out = np.empty((ps.base.n_vertices, 3, 2))
    angles = 2 * np.pi * np.arange(3) / 3
    unit = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    for i in range(ps.base.n_vertices):
        pts = mandated_points(ps, i)
        c = pts.mean(axis=0)
        inradius = margin * np.linalg.norm(pts - c, axis=1).max()
        out[i] = c + 2 * inradius * unit
    return out


def c1_labels(ps: PSRefinement) -> list[tuple]:
    tri = ps.base
    labels = [("v", i, r) for i in range(tri.n_vertices) for r in (1, 2, 3)]
    labels += [("t",) + tuple(int(x) for x in ps.labels[t, m]) for t in range(tri.n_triangles) for m in range(6)]
    for e in np.flatnonzero(tri.boundary):
        i, j = (int(x) for x in tri.edges[e])
        labels += [("e", i, j), ("e", j, i)]
    return labels


def c1_index(ps: PSRefinement) -> dict:
    return {lab: n for n, lab in enumerate(c1_labels(ps))}


def _vertex_micro(ps: PSRefinement, i: int) -> int:
    t = ps.base.vertex_triangles(i)[0]
    return next(6 * t + m for m in range(6) if ps.labels[t, m, 0] == i)


def _boundary_micro(ps: PSRefinement, a: int, b: int) -> int:
    e = ps.base.edge_id(a, b)
    (t,) = ps.base.edge_triangles[e]
    return ps.micro_id(t, (a, b, ps.base.third_vertex(t, e)))


def c1_functionals(ps: PSRefinement, q: np.ndarray) -> list[DualFunctional]:
    verts = ps.base.vertices
    out = []
    for lab in c1_labels(ps):
        if lab[0] == "v":
            _, i, r = lab
            v = verts[i]
            m = _vertex_micro(ps, i)
            pts = np.array([v, v, v + 3 * (q[i, r - 1] - v)])
            out.append(DualFunctional("vertex", lab, m, pts))
        elif lab[0] == "t":
            _, a, b, c = lab
            t = ps.base.edge_triangles[ps.base.edge_id(a, b)]
            t = next(x for x in t if c in ps.base.triangles[x])
            m = ps.micro_id(t, (a, b, c))
            out.append(DualFunctional("triangle", lab, m, np.array([verts[a], verts[b], ps.split_points[t]])))
        else:
            _, a, b = lab
            e = ps.base.edge_id(a, b)
            m = _boundary_micro(ps, a, b)
            out.append(DualFunctional("edge", lab, m, np.array([verts[a], verts[b], ps.edge_points[e]])))
    return out


def local_functional_rows(ps: PSRefinement, t: int, q: np.ndarray) -> np.ndarray:
    """The 21 local functionals of macro ``t`` as rows acting on its 60 BB coefficients."""
    verts = ps.base.vertices
    c = ps.split_points[t]
    rows = np.zeros((21, 60))
    corner_micro = {int(ps.labels[t, m, 0]): m for m in (5, 3, 1)}
    for n, i in enumerate(ps.base.corners(t)):
        m = corner_micro[i]
        for r in range(3):
            v = verts[i]
            rows[3 * n + r, 10 * m : 10 * m + 10] = blossom_weights(
                ps.micro_points(6 * t + m), v, v, v + 3 * (q[i, r] - v)
            )
    for m in range(6):
        a, b, _ = (int(x) for x in ps.labels[t, m])
        corners = ps.micro_points(6 * t + m)
        e = ps.base.edge_id(a, b)
        rows[9 + m, 10 * m : 10 * m + 10] = blossom_weights(corners, verts[a], verts[b], c)
        rows[15 + m, 10 * m : 10 * m + 10] = blossom_weights(corners, verts[a], verts[b], ps.edge_points[e])
    return rows


def local_constraint_rows(ps: PSRefinement, t: int) -> np.ndarray:
    """C0 and C1 conditions across the six interior edges of macro ``t``."""
    rows = []
    for m in range(6):
        n = (m + 1) % 6
        pa, pb = ps.micro_points(6 * t + m), ps.micro_points(6 * t + n)
        # shared corners: the split point (index 2) and corner 1 of micro m or corner 0
        ia = set(ps.micro[t, m].tolist())
        shared = [k for k in range(3) if ps.micro[t, m, k] in set(ps.micro[t, n].tolist())]
        p1, p2 = pa[shared[0]], pa[shared[1]]
        qa = pa[[k for k in range(3) if k not in shared][0]]
        qb = pb[[k for k in range(3) if ps.micro[t, n, k] not in ia][0]]
        for _, args in smoothness_conditions(p1, p2, qa, qb, 1):
            row = np.zeros(60)
            row[10 * m : 10 * m + 10] = blossom_weights(pa, *args)
            row[10 * n : 10 * n + 10] -= blossom_weights(pb, *args)
            rows.append(row)
    return np.array(rows)


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """Maps the 21 local values of one macro-triangle to its 60 BB coefficients."""

    matrix: np.ndarray
    condition: float
    columns: np.ndarray
    gather: np.ndarray


def _local_operator(ps: PSRefinement, t: int, q: np.ndarray, index: dict) -> LocalOperator:
    cons = local_constraint_rows(ps, t)
    null = la.null_space(cons, rcond=1e-10)
    if null.shape[1] != 21:
        raise LocalSolveError(f"local C1 space of triangle {t} has dimension {null.shape[1]}, expected 21")
    k = local_functional_rows(ps, t, q) @ null
    cond = float(np.linalg.cond(k))
    if not np.isfinite(cond) or cond > LOCAL_COND_LIMIT:
        raise LocalSolveError(f"local system of triangle {t} is ill-conditioned (cond={cond:.3g})")
    g = null @ np.linalg.inv(k)

    gather: dict[tuple[int, int], float] = {}
    for n, i in enumerate(ps.base.corners(t)):
        for r in range(3):
            gather[(3 * n + r, index[("v", i, r + 1)])] = 1.0
    for m in range(6):
        a, b, c = (int(x) for x in ps.labels[t, m])
        gather[(9 + m, index[("t", a, b, c)])] = 1.0
        e = ps.base.edge_id(a, b)
        other = ps.neighbor(e, t)
        if other is None:
            gather[(15 + m, index[("e", a, b)])] = 1.0
        else:
            mu = ps.mu_from(e, t)
            c2 = ps.base.third_vertex(other, e)
            gather[(15 + m, index[("t", a, b, c)])] = 1.0 - mu
            gather[(15 + m, index[("t", a, b, c2)])] = mu
    cols = np.array(sorted({col for _, col in gather}))
    pos = {col: n for n, col in enumerate(cols)}
    gmat = np.zeros((21, len(cols)))
    for (row, col), w in gather.items():
        gmat[row, pos[col]] += w
    return LocalOperator(g, cond, cols, gmat)


class C1Space:
    """C1 cubic splines on a Powell-Sabin refinement with their B-spline basis.

    Parameters
    ----------
    ps : PSRefinement
    q : array, optional
        Vertex triangles ``(V, 3, 2)``; defaults to :func:`choose_vertex_triangles`.
    threads : int, optional
        Worker threads for the per-triangle local solves
        (``PSPLINE_THREADS`` overrides).
    """

    name = "c1"

    def __init__(self, ps: PSRefinement, q=None, threads: int | None = None):
        self.ps = ps
        self.q = choose_vertex_triangles(ps) if q is None else np.asarray(q, dtype=float)
        self.labels = c1_labels(ps)
        self.index = {lab: n for n, lab in enumerate(self.labels)}
        self.functionals = c1_functionals(ps, self.q)
        self.dim = len(self.labels)

        n_t = ps.base.n_triangles
        workers = min(threads_from_env(threads), max(n_t, 1))
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                self.local = list(pool.map(lambda t: _local_operator(ps, t, self.q, self.index), range(n_t)))
        else:
            self.local = [_local_operator(ps, t, self.q, self.index) for t in range(n_t)]

        rows, cols, vals = [], [], []
        for t, op in enumerate(self.local):
            block = op.matrix @ op.gather
            r, c = np.nonzero(np.abs(block) > 0)
            rows.append(60 * t + r)
            cols.append(op.columns[c])
            vals.append(block[r, c])
        self.synthesis = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(60 * n_t, self.dim),
        )

        rows, cols, vals = [], [], []
        for n, f in enumerate(self.functionals):
            rows += [n] * 10
            cols += range(10 * f.micro, 10 * f.micro + 10)
            vals += list(f.weights(ps))
        self.functional_matrix = sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, 60 * n_t))

    @property
    def local_conditions(self) -> np.ndarray:
        return np.array([op.condition for op in self.local])

    def local_dual_to_bb(self, t: int, local_values) -> list[CubicPatch]:
        """Six micro-patches of macro ``t`` from its 21 local values."""
        bb = self.local[t].matrix @ np.asarray(local_values, dtype=float)
        return [CubicPatch(self.ps.micro_points(6 * t + m), bb[10 * m : 10 * m + 10]) for m in range(6)]

    def local_values(self, t: int, coeffs) -> np.ndarray:
        op = self.local[t]
        return op.gather @ np.asarray(coeffs, dtype=float)[op.columns]

    def synthesize(self, coeffs) -> SplineFunction:
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coefficients, got {c.shape}")
        return SplineFunction(self.ps, self.synthesis @ c)

    def basis_function(self, b: int) -> SplineFunction:
        return SplineFunction(self.ps, self.synthesis[:, b].toarray().ravel())

    def apply_dual(self, s: SplineFunction, f: DualFunctional | int) -> float:
        if isinstance(f, (int, np.integer)):
            f = self.functionals[f]
        if s.ps is not self.ps:
            raise ValueError("spline and functional live on different refinements")
        return s.patch(f.micro).blossom(*f.points)

    def analyze(self, s: SplineFunction, rtol: float = 1e-9) -> np.ndarray:
        """Dual coefficients of a C1 spline.

        Raises
        ------
        NotC1Error
            If a C0/C1 condition is violated by more than ``rtol * scale``.
        """
        if s.ps is not self.ps:
            raise ValueError("spline lives on a different refinement")
        res = smoothness_residuals(smoothness_operator(self.ps, 1), s.coeffs.ravel(), 1)
        if res.max() > rtol * max(s.scale, 1e-300):
            raise NotC1Error(f"spline is not C1 (max residual {res.max():.3g})")
        return self.functional_matrix @ s.coeffs.ravel()

    def duality_matrix(self) -> np.ndarray:
        return (self.functional_matrix @ self.synthesis).toarray()

    def polynomial_coefficients(self, mono) -> np.ndarray:
        """Dual coefficients of a cubic polynomial (exact blossom values)."""
        return np.array([f.of_polynomial(mono) for f in self.functionals])

    def collocation(self, points, gradient: bool = False) -> sp.csr_matrix:
        return (collocation_bb(self.ps, points, gradient=gradient) @ self.synthesis).tocsr()

    def greville(self) -> np.ndarray:
        """Control points whose coordinates are the dual coefficients of ``x`` and ``y``."""
        return np.array([f.points.mean(axis=0) for f in self.functionals])

    def support(self, b: int) -> list[int]:
        """Macro-triangles on which basis function ``b`` has a nonzero BB coefficient."""
        rows = self.synthesis[:, b].nonzero()[0]
        return sorted(set((rows // 60).tolist()))


def q_containment_margin(ps: PSRefinement, q: np.ndarray) -> np.ndarray:
    """Smallest barycentric coordinate of any mandated point in its vertex triangle."""
    return np.array(
        [barycentric_coords(q[i], mandated_points(ps, i)).min() for i in range(ps.base.n_vertices)]
    )
