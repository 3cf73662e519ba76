"""Reduced super-smooth basis obtained by recombining C1 B-splines.

Reduced basis functions are columns of a sparse recombination matrix ``M``
acting on C1 dual coefficients:

* ``("v", i, r)``: the C1 vertex function itself;
* ``("E", i, j, k)``: for a non-symmetric triangle ``t_ijk`` attached to
  ``e_ij``, ``(1 - w_k)(B_ijk + B_jik) + w_k'(B_ijk' + B_jik')`` (interior) or
  ``(1 - w_k)(B_ijk + B_jik)`` (boundary), with ``w`` the omega weights;
* ``("T", i, j, k)``: for a symmetric triangle, the sum of the three edge
  combinations above taken from that triangle;
* ``("B", i, j)``: for a boundary edge, ``B^e_ij + B^e_ji + w_k(B_ijk + B_jik)``.

Canonical order: vertex block, symmetric triangles by macro index, edge
functions by (edge id, macro index), boundary edges by edge id.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bezier import blossom_weights
from .c1space import C1Space, DualFunctional, c1_index
from .mesh import PSRefinement, weight_identity_residuals
from .spline import (
    SplineFunction,
    collocation_bb,
    smoothness_operator,
    smoothness_residuals,
    split_point_jet_operator,
)

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-12


class RecombinationError(ValueError):
    """Geometric weights inconsistent with the symmetry flags."""


class PartnerMismatchError(ValueError):
    """A reduced functional's equivalent blossom values disagree."""


@dataclass(frozen=True, eq=False)
class RecombinationMap:
    """``matrix[c1 row, reduced column]``; columns follow ``labels``."""

    matrix: sp.csc_matrix
    labels: list
    c1_labels: list

    @property
    def shape(self):
        return self.matrix.shape


def _edge_pair(ps, e, t, idx):
    """C1 rows of ``B_{i,j,k}`` and ``B_{j,i,k}`` for edge ``e`` seen from ``t``."""
    i, j = (int(x) for x in ps.base.edges[e])
    k = ps.base.third_vertex(t, e)
    return [idx[("t", i, j, k)], idx[("t", j, i, k)]]


def _edge_column(ps: PSRefinement, e: int, t: int, idx: dict) -> dict:
    col = {}
    s = ps.slot(e, t)
    for r in _edge_pair(ps, e, t, idx):
        col[r] = col.get(r, 0.0) + 1.0 - ps.omega[e, s]
    other = ps.neighbor(e, t)
    if other is not None:
        for r in _edge_pair(ps, e, other, idx):
            col[r] = col.get(r, 0.0) + ps.omega[e, 1 - s]
    return col


def reduced_labels(ps: PSRefinement) -> list[tuple]:
    tri = ps.base
    labels = [("v", i, r) for i in range(tri.n_vertices) for r in (1, 2, 3)]
    labels += [("T",) + tri.corners(t) for t in ps.symmetric_triangles]
    for e in range(tri.n_edges):
        i, j = (int(x) for x in tri.edges[e])
        for t in sorted(tri.edge_triangles[e]):
            if not ps.symmetric[t]:
                labels.append(("E", i, j, tri.third_vertex(t, e)))
    labels += [("B",) + tuple(int(x) for x in tri.edges[e]) for e in np.flatnonzero(tri.boundary)]
    return labels


def _triangle_of(ps, i, j, k):
    e = ps.base.edge_id(i, j)
    return next(t for t in ps.base.edge_triangles[e] if k in ps.base.triangles[t])


def edge_combination(ps: PSRefinement, e: int, t: int) -> dict:
    """C1 coefficients of the edge combination ``B^e_{ij,k}`` (any symmetry status)."""
    return _edge_column(ps, e, t, c1_index(ps))


def build_recombination(ps: PSRefinement, tol: float = IDENTITY_TOL) -> RecombinationMap:
    """Sparse recombination matrix from C1 dual coefficients to the reduced basis.

    Raises
    ------
    RecombinationError
        If a symmetric triangle violates the nu/omega identities by more
        than ``tol``.
    """
    bad = [r for r in weight_identity_residuals(ps) if r["residual"] > tol]
    if bad:
        raise RecombinationError(f"weight identities violated: {bad[:3]}")
    tri = ps.base
    idx = c1_index(ps)
    c1_labels = list(idx)
    labels = reduced_labels(ps)
    rows, cols, vals = [], [], []
    for n, lab in enumerate(labels):
        if lab[0] == "v":
            col = {idx[lab]: 1.0}
        elif lab[0] == "T":
            t = _triangle_of(ps, *lab[1:])
            col = {}
            for e in tri.triangle_edges(t):
                for r, w in _edge_column(ps, e, t, idx).items():
                    col[r] = col.get(r, 0.0) + w
        elif lab[0] == "E":
            _, i, j, k = lab
            col = _edge_column(ps, tri.edge_id(i, j), _triangle_of(ps, i, j, k), idx)
        else:
            _, i, j = lab
            e = tri.edge_id(i, j)
            (t,) = tri.edge_triangles[e]
            col = {idx[("e", i, j)]: 1.0, idx[("e", j, i)]: 1.0}
            for r in _edge_pair(ps, e, t, idx):
                col[r] = ps.omega[e, 0]
        for r, w in col.items():
            rows.append(r)
            cols.append(n)
            vals.append(w)
    mat = sp.csc_matrix((vals, (rows, cols)), shape=(len(c1_labels), len(labels)))
    return RecombinationMap(mat, labels, c1_labels)


@dataclass(frozen=True, eq=False)
class ReducedFunctional(DualFunctional):
    """Reduced dual functional; ``partners`` hold equivalent (micro, points) evaluations."""

    partners: tuple = field(default=(), repr=False)


def reduced_functionals(ps: PSRefinement, c1: C1Space, labels) -> list[ReducedFunctional]:
    tri = ps.base
    verts = tri.vertices
    out = []
    for lab in labels:
        if lab[0] == "v":
            f = c1.functionals[c1.index[lab]]
            out.append(ReducedFunctional("vertex", lab, f.micro, f.points))
        elif lab[0] == "T":
            _, i, j, k = lab
            t = _triangle_of(ps, i, j, k)
            pts = verts[[i, j, k]]
            m0 = ps.micro_id(t, (i, j, k))
            partners = tuple((6 * t + m, pts) for m in range(6) if 6 * t + m != m0)
            out.append(ReducedFunctional("sym_triangle", lab, m0, pts, partners))
        elif lab[0] == "E":
            _, i, j, k = lab
            t = _triangle_of(ps, i, j, k)
            pts = np.array([verts[i], verts[j], ps.split_points[t]])
            out.append(
                ReducedFunctional(
                    "edge_triangle", lab, ps.micro_id(t, (i, j, k)), pts, ((ps.micro_id(t, (j, i, k)), pts),)
                )
            )
        else:
            _, i, j = lab
            e = tri.edge_id(i, j)
            (t,) = tri.edge_triangles[e]
            k = tri.third_vertex(t, e)
            pts = np.array([verts[i], verts[j], ps.edge_points[e]])
            out.append(
                ReducedFunctional(
                    "boundary_edge", lab, ps.micro_id(t, (i, j, k)), pts, ((ps.micro_id(t, (j, i, k)), pts),)
                )
            )
    return out


class ReducedSpace:
    """Span of the reduced basis, realized through a :class:`C1Space`."""

    name = "reduced"

    def __init__(self, c1: C1Space | PSRefinement, **kwargs):
        if isinstance(c1, PSRefinement):
            c1 = C1Space(c1, **kwargs)
        self.c1 = c1
        self.ps = c1.ps
        self.recombination = build_recombination(self.ps)
        self.labels = self.recombination.labels
        self.index = {lab: n for n, lab in enumerate(self.labels)}
        self.dim = len(self.labels)
        self.functionals = reduced_functionals(self.ps, c1, self.labels)
        self.synthesis = (c1.synthesis @ self.recombination.matrix).tocsr()
        rows, cols, vals = [], [], []
        for n, f in enumerate(self.functionals):
            rows += [n] * 10
            cols += range(10 * f.micro, 10 * f.micro + 10)
            vals += list(f.weights(self.ps))
        self.functional_matrix = sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, 60 * self.ps.base.n_triangles))

    def synthesize(self, coeffs) -> SplineFunction:
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coefficients, got {c.shape}")
        return SplineFunction(self.ps, self.synthesis @ c)

    def basis_function(self, b: int) -> SplineFunction:
        return SplineFunction(self.ps, self.synthesis[:, b].toarray().ravel())

    def c1_coefficients(self, coeffs) -> np.ndarray:
        return self.recombination.matrix @ np.asarray(coeffs, dtype=float)

    def partner_deviation(self, s: SplineFunction, f: ReducedFunctional) -> float:
        value = s.patch(f.micro).blossom(*f.points)
        return max((abs(s.patch(m).blossom(*pts) - value) for m, pts in f.partners), default=0.0)

    def apply_reduced_dual(self, s: SplineFunction, f, verify: bool = False, rtol: float = 1e-9) -> float:
        """Value of reduced functional ``f`` (object or index) on ``s``.

        With ``verify=True`` the equivalent blossom values on the partner
        micro-triangles must agree, otherwise :class:`PartnerMismatchError`.
        """
        if isinstance(f, (int, np.integer)):
            f = self.functionals[f]
        value = s.patch(f.micro).blossom(*f.points)
        if verify:
            dev = self.partner_deviation(s, f)
            if dev > rtol * max(s.scale, 1e-300):
                raise PartnerMismatchError(f"{f.label}: partner deviation {dev:.3g}")
        return value

    def analyze(self, s: SplineFunction, verify: bool = True) -> np.ndarray:
        if verify:
            for f in self.functionals:
                self.apply_reduced_dual(s, f, verify=True)
        return self.functional_matrix @ s.coeffs.ravel()

    def duality_matrix(self) -> np.ndarray:
        return (self.functional_matrix @ self.synthesis).toarray()

    def polynomial_coefficients(self, mono) -> np.ndarray:
        return np.array([f.of_polynomial(mono) for f in self.functionals])

    def collocation(self, points, gradient: bool = False) -> sp.csr_matrix:
        return (collocation_bb(self.ps, points, gradient=gradient) @ self.synthesis).tocsr()

    def greville(self) -> np.ndarray:
        return greville_control_net(self)

    def support(self, b: int) -> list[int]:
        rows = self.synthesis[:, b].nonzero()[0]
        return sorted(set((rows // 60).tolist()))


def greville_control_net(space: ReducedSpace) -> np.ndarray:
    """Control points: ``q_{i,r}``, triangle centroids, and ``(v_i + v_j + x)/3``.

    ``x`` is ``v_ijk`` for edge functions and ``v_ij`` for boundary edges.
    """
    ps = space.ps
    verts = ps.base.vertices
    out = []
    for lab in space.labels:
        if lab[0] == "v":
            out.append(space.c1.q[lab[1], lab[2] - 1])
        elif lab[0] == "T":
            out.append(verts[list(lab[1:])].mean(axis=0))
        elif lab[0] == "E":
            _, i, j, k = lab
            out.append((verts[i] + verts[j] + ps.split_points[_triangle_of(ps, i, j, k)]) / 3)
        else:
            _, i, j = lab
            out.append((verts[i] + verts[j] + ps.edge_points[ps.base.edge_id(i, j)]) / 3)
    return np.array(out)


def dimension_report(ps: PSRefinement) -> dict:
    """Dimensions of the full C1 space and of the reduced space."""
    tri = ps.base
    n_s = int(ps.symmetric.sum())
    full = 3 * tri.n_vertices + 4 * tri.n_edges
    reduced = 3 * tri.n_vertices + n_s + 3 * (tri.n_triangles - n_s) + tri.n_boundary_edges
    return {
        "vertices": tri.n_vertices,
        "edges": tri.n_edges,
        "boundary_edges": tri.n_boundary_edges,
        "triangles": tri.n_triangles,
        "symmetric_triangles": n_s,
        "full": full,
        "reduced": reduced,
        "ratio": full / reduced,
    }


@dataclass
class SupersmoothnessReport:
    """Worst residuals over all reduced basis functions (absolute, per unit scale)."""

    c1: float
    split_edges_c2: float
    split_points_c2: float
    symmetric_interior_c2: float
    nonsymmetric_vertex_edges_c2: float
    eq12_pairs: list = field(default_factory=list)

    @property
    def eq12_deviation(self) -> float:
        return max((max(abs(a - 1.0), abs(b)) for _, _, a, b in self.eq12_pairs), default=0.0)

    def passed(self, tol: float = 1e-10) -> bool:
        return (
            max(self.c1, self.split_edges_c2, self.split_points_c2, self.symmetric_interior_c2) < tol
            and self.eq12_deviation < tol
        )


def verify_supersmoothness(space: ReducedSpace) -> SupersmoothnessReport:
    """C1/C2 residuals of every reduced basis function, scaled by its max coefficient.

    Also evaluates the edge combinations ``B^e_{ij,k}`` of symmetric
    triangles at ``(v_i, v_j, v_k)`` on ``t_{i,j,k}`` and ``t_{i,k,j}``, which
    must give 1 and 0 and so break C2 across ``[v_i, v_ijk]``.
    """
    ps = space.ps
    bb = space.synthesis.toarray()
    scale = np.maximum(np.abs(bb).max(axis=0), 1e-300)
    op = smoothness_operator(ps, 2)
    res = smoothness_residuals(op, bb, 2) / scale  # (edges, 3, dim)
    kinds = np.array([e.kind for e in op.edges])
    macros = np.array([e.macro for e in op.edges])
    sym = ps.symmetric[macros]
    c1 = float(res[:, :2].max())
    split_c2 = float(res[kinds == "split", 2].max())
    inner = (kinds != "macro") & sym
    sym_c2 = float(res[inner][:, 2].max()) if inner.any() else 0.0
    nonsym = (kinds == "vertex") & ~sym
    nonsym_c2 = float(res[nonsym][:, 2].max()) if nonsym.any() else 0.0
    jet, _ = split_point_jet_operator(ps)
    jet_c2 = float((np.abs(jet @ bb) / scale).max())

    pairs = []
    idx = space.c1.index
    tri = ps.base
    verts = tri.vertices
    for t in ps.symmetric_triangles:
        for e in tri.triangle_edges(t):
            col = edge_combination(ps, e, t)
            c = np.zeros(space.c1.dim)
            for r, w in col.items():
                c[r] = w
            s = space.c1.synthesize(c)
            i, j = (int(x) for x in tri.edges[e])
            k = tri.third_vertex(t, e)
            for a, b in ((i, j), (j, i)):
                args = verts[[i, j, k]]
                on = s.patch(ps.micro_id(t, (a, b, k))).blossom(*args)
                off = s.patch(ps.micro_id(t, (a, k, b))).blossom(*args)
                pairs.append((t, (a, b, k), on, off))
    return SupersmoothnessReport(c1, split_c2, jet_c2, sym_c2, nonsym_c2, pairs)


def force_nonsymmetric(ps: PSRefinement) -> PSRefinement:
    """The same refinement with an empty set of symmetric triangles."""
    return ps.with_symmetric(np.zeros_like(ps.symmetric))


def c2_partner_blossoms(ps: PSRefinement, t: int, coeffs) -> np.ndarray:
    """``b(v_i, v_j, v_k)`` on all six micro-patches of macro ``t``."""
    corners = ps.base.vertices[list(ps.base.corners(t))]
    c = np.asarray(coeffs, dtype=float).reshape(-1, 10)
    return np.array([blossom_weights(ps.micro_points(6 * t + m), *corners) @ c[6 * t + m] for m in range(6)])


__all__ = [
    "RecombinationMap",
    "ReducedFunctional",
    "ReducedSpace",
    "build_recombination",
    "dimension_report",
    "edge_combination",
    "force_nonsymmetric",
    "greville_control_net",
    "reduced_labels",
    "verify_supersmoothness",
    "c2_partner_blossoms",
]
