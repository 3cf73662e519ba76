"""Triangulations and their Powell-Sabin 6-split refinement.

A :class:`Triangulation` stores the macro mesh (vertices, triangles and the
derived edge list).  :func:`refine_powell_sabin` places one split point inside
every triangle and one split point on every edge, producing a
:class:`PSRefinement` that also carries the symmetry flags and the affine
weights (``mu``, ``nu``, ``omega``) used by the reduced spline space.

Micro-triangle labelling
------------------------
For a macro-triangle with sorted corner indices ``i < j < k`` the six
micro-triangles are stored in the cyclic order::

    (i,j,k), (j,i,k), (j,k,i), (k,j,i), (k,i,j), (i,k,j)

where the label ``(a, b, c)`` denotes the triangle ``[v_a, v_ab, v_abc]``.
Consecutive micro-triangles share an interior edge, and micro 5 shares
``[v_i, v_ijk]`` with micro 0.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

COLLINEARITY_TOL = 1e-10
AREA_TOL = 1e-14


class MeshError(ValueError):
    """Invalid or non-conforming triangulation."""


class RefinementError(ValueError):
    """Split points that do not define a valid Powell-Sabin refinement."""


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _readonly(a):
    a = np.array(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Conforming triangulation ``(V, E, T)`` of a polygonal domain.

    Build instances with :func:`build_triangulation`; the constructor does not
    validate its input.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_triangles: tuple
    boundary: np.ndarray
    edge_index: dict = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_boundary_edges(self) -> int:
        return int(self.boundary.sum())

    @property
    def scale(self) -> float:
        extent = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(max(extent.max(), np.finfo(float).tiny))

    def edge_id(self, i: int, j: int) -> int:
        return self.edge_index[(min(i, j), max(i, j))]

    def corners(self, t: int) -> tuple[int, int, int]:
        """Sorted vertex indices of triangle ``t``."""
        i, j, k = sorted(int(v) for v in self.triangles[t])
        return i, j, k

    def triangle_edges(self, t: int) -> tuple[int, int, int]:
        """Edge ids ``(e_ij, e_jk, e_ki)`` for the sorted corners of ``t``."""
        i, j, k = self.corners(t)
        return self.edge_id(i, j), self.edge_id(j, k), self.edge_id(i, k)

    def third_vertex(self, t: int, e: int) -> int:
        a, b = self.edges[e]
        (k,) = set(int(v) for v in self.triangles[t]) - {int(a), int(b)}
        return k

    def vertex_triangles(self, i: int) -> list[int]:
        return [t for t in range(self.n_triangles) if i in self.triangles[t]]

    def max_edge_length(self) -> float:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.hypot(d[:, 0], d[:, 1]).max())


def build_triangulation(vertices, triangles) -> Triangulation:
    """Validate a vertex/triangle list and derive edges and boundary flags.

    Raises
    ------
    MeshError
        On out-of-range indices, degenerate or duplicate triangles,
        duplicate vertices, edges shared by more than two triangles,
        overlapping neighbours, hanging vertices or unused vertices.
    """
    verts = np.asarray(vertices, dtype=float)
    tris = np.asarray(triangles, dtype=np.int64)
    if verts.ndim != 2 or verts.shape[1] != 2:
        raise MeshError("vertices must be an (n, 2) array")
    if not np.all(np.isfinite(verts)):
        raise MeshError("vertex coordinates must be finite")
    if tris.ndim != 2 or tris.shape[1] != 3 or len(tris) == 0:
        raise MeshError("need at least one triangle given as an index triple")
    if tris.min() < 0 or tris.max() >= len(verts):
        raise MeshError("triangle index out of range")
    if np.any(np.sort(tris, axis=1)[:, 1:] == np.sort(tris, axis=1)[:, :-1]):
        raise MeshError("triangle with repeated vertex index")

    extent = verts.max(axis=0) - verts.min(axis=0)
    scale = float(extent.max())
    if scale <= 0:
        raise MeshError("all vertices coincide")

    p = verts[tris]
    area2 = _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    bad = np.flatnonzero(np.abs(area2) / 2 < AREA_TOL * scale**2)
    if bad.size:
        raise MeshError(f"degenerate triangle(s) {bad.tolist()}")

    from scipy.spatial import cKDTree

    pairs = cKDTree(verts).query_pairs(1e-12 * scale)
    if pairs:
        raise MeshError(f"duplicate vertices {sorted(pairs)[:5]}")

    keys = [tuple(sorted(t)) for t in tris.tolist()]
    if len(set(keys)) != len(keys):
        raise MeshError("duplicate triangle")

    attached: dict[tuple[int, int], list[int]] = {}
    for t, (a, b, c) in enumerate(tris.tolist()):
        for u, v in ((a, b), (b, c), (c, a)):
            attached.setdefault((min(u, v), max(u, v)), []).append(t)
    edges = sorted(attached)
    for e in edges:
        if len(attached[e]) > 2:
            raise MeshError(f"edge {e} attached to {len(attached[e])} triangles")

    used = np.zeros(len(verts), dtype=bool)
    used[tris.ravel()] = True
    if not used.all():
        raise MeshError(f"unused vertices {np.flatnonzero(~used).tolist()}")

    edge_arr = np.array(edges, dtype=np.int64)
    boundary = np.array([len(attached[e]) == 1 for e in edges])

    # neighbours across an interior edge must lie on opposite sides of it
    for (a, b) in edges:
        ts = attached[(a, b)]
        if len(ts) == 2:
            sides = []
            for t in ts:
                (c,) = set(tris[t].tolist()) - {a, b}
                sides.append(_cross(verts[b] - verts[a], verts[c] - verts[a]))
            if sides[0] * sides[1] >= 0:
                raise MeshError(f"triangles {ts} overlap across edge {(a, b)}")

    # hanging vertices sit strictly inside a (combinatorial) boundary edge
    for (a, b) in edge_arr[boundary]:
        d = verts[b] - verts[a]
        rel = verts - verts[a]
        s = rel @ d / (d @ d)
        off = np.abs(_cross(d, rel)) / math.hypot(*d)
        inside = (s > 1e-12) & (s < 1 - 1e-12) & (off < 1e-12 * scale)
        if inside.any():
            raise MeshError(
                f"vertex {np.flatnonzero(inside).tolist()} lies inside edge {(int(a), int(b))}"
            )

    return Triangulation(
        vertices=_readonly(verts),
        triangles=_readonly(tris),
        edges=_readonly(edge_arr),
        edge_triangles=tuple(tuple(attached[e]) for e in edges),
        boundary=_readonly(boundary),
        edge_index={e: n for n, e in enumerate(edges)},
    )


def uniform_refine(tri: Triangulation, levels: int = 1) -> Triangulation:
    """Split every triangle into four through its edge midpoints, ``levels`` times."""
    verts = [tuple(v) for v in tri.vertices.tolist()]
    tris = tri.triangles.tolist()
    for _ in range(levels):
        mids: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in mids:
                pa, pb = verts[a], verts[b]
                verts.append(((pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2))
                mids[key] = len(verts) - 1
            return mids[key]

        new = []
        for a, b, c in tris:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        tris = new
    return build_triangulation(verts, tris)


def three_directional_mesh(n: int, x0=0.0, y0=0.0, size=1.0) -> Triangulation:
    """Square ``[x0, x0+size] x [y0, y0+size]`` cut into ``2 n^2`` triangles."""
    xs = np.linspace(x0, x0 + size, n + 1)
    ys = np.linspace(y0, y0 + size, n + 1)
    verts = [(x, y) for y in ys for x in xs]
    tris = []
    for r in range(n):
        for c in range(n):
            a = r * (n + 1) + c
            b, d, e = a + 1, a + n + 1, a + n + 2
            tris += [[a, b, d], [b, e, d]]
    return build_triangulation(verts, tris)


def barycentric_coords(tri_pts, p) -> np.ndarray:
    """Barycentric coordinates of ``p`` (shape ``(..., 2)``) in ``tri_pts``; result ``(..., 3)``."""
    tri_pts = np.asarray(tri_pts, dtype=float)
    p = np.asarray(p, dtype=float)
    m = np.array([tri_pts[0] - tri_pts[2], tri_pts[1] - tri_pts[2]]).T
    l12 = np.linalg.solve(m, (p - tri_pts[2]).reshape(-1, 2).T).T
    out = np.empty(l12.shape[:-1] + (3,))
    out[:, :2] = l12
    out[:, 2] = 1.0 - l12.sum(axis=1)
    return out.reshape(p.shape[:-1] + (3,))


def split_point(tri_pts, strategy="incenter") -> np.ndarray:
    """Interior split point of a triangle.

    ``strategy`` is ``"incenter"``, ``"barycenter"`` or an explicit point,
    which must lie strictly inside the triangle.
    """
    v = np.asarray(tri_pts, dtype=float)
    if isinstance(strategy, str):
        if strategy == "barycenter":
            return v.mean(axis=0)
        if strategy == "incenter":
            a = np.linalg.norm(v[1] - v[2])
            b = np.linalg.norm(v[2] - v[0])
            c = np.linalg.norm(v[0] - v[1])
            return (a * v[0] + b * v[1] + c * v[2]) / (a + b + c)
        raise ValueError(f"unknown split strategy {strategy!r}")
    p = np.asarray(strategy, dtype=float)
    if barycentric_coords(v, p).min() <= 1e-12:
        raise RefinementError(f"split point {p.tolist()} is not strictly inside the triangle")
    return p


@dataclass(frozen=True, eq=False)
class PSRefinement:
    """Powell-Sabin refinement of a triangulation with cached geometric weights.

    Per-edge arrays of shape ``(E, 2)`` are indexed by the *slot* of the
    attached triangle, i.e. the position of the triangle in
    ``base.edge_triangles[e]``.  ``mu[e]`` satisfies
    ``v_ij = (1 - mu) v_ijk + mu v_ijk'`` with ``k`` in slot 0 (NaN on
    boundary edges).  ``nu`` is NaN wherever it is undefined, i.e. for
    triangles that are not symmetrically refined.
    """

    base: Triangulation
    split_points: np.ndarray
    edge_points: np.ndarray
    edge_ratio: np.ndarray
    mu: np.ndarray
    symmetric: np.ndarray
    symmetry_residuals: np.ndarray
    borderline: np.ndarray
    nu: np.ndarray
    omega: np.ndarray
    w_points: np.ndarray
    labels: np.ndarray = field(repr=False)
    micro: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)

    @property
    def n_micro(self) -> int:
        return 6 * self.base.n_triangles

    @property
    def symmetric_triangles(self) -> list[int]:
        return np.flatnonzero(self.symmetric).tolist()

    def micro_points(self, m: int) -> np.ndarray:
        """Corners ``[v_a, v_ab, v_abc]`` of global micro-triangle ``m``."""
        return self.points[self.micro.reshape(-1, 3)[m]]

    def micro_id(self, t: int, label) -> int:
        """Global micro index of label ``(a, b, c)`` inside macro-triangle ``t``."""
        for m in range(6):
            if tuple(self.labels[t, m]) == tuple(label):
                return 6 * t + m
        raise KeyError(f"label {label} not in triangle {t}")

    def slot(self, e: int, t: int) -> int:
        return self.base.edge_triangles[e].index(t)

    def neighbor(self, e: int, t: int) -> int | None:
        ts = self.base.edge_triangles[e]
        if len(ts) == 1:
            return None
        return ts[1 - ts.index(t)]

    def mu_from(self, e: int, t: int) -> float:
        """``mu`` seen from triangle ``t``: ``v_ij = (1-mu) v_ijk + mu v_ijk'``."""
        return float(self.mu[e] if self.slot(e, t) == 0 else 1.0 - self.mu[e])

    def with_symmetric(self, flags) -> "PSRefinement":
        """Copy with forced symmetry flags (only clearing detected flags is allowed)."""
        flags = np.asarray(flags, dtype=bool)
        if flags.shape != self.symmetric.shape:
            raise ValueError("flag array has wrong length")
        if np.any(flags & ~self.symmetric):
            raise RefinementError("cannot mark a non-collinear triangle as symmetric")
        return _finish(dataclasses.replace(self, symmetric=_readonly(flags)))

    def ps_counts(self) -> dict:
        tri = self.base
        return {
            "vertices": len(self.points),
            "triangles": self.n_micro,
            "edges": 6 * tri.n_triangles + 2 * tri.n_edges,
            "boundary_edges": 2 * tri.n_boundary_edges,
        }


def _segment_edge_crossing(c0, c1, a, b):
    """Solve ``c0 + mu (c1 - c0) = a + lam (b - a)``; returns ``(mu, lam)``."""
    m = np.array([c1 - c0, a - b]).T
    if abs(np.linalg.det(m)) < 1e-300:
        raise RefinementError("split segment parallel to edge")
    mu, lam = np.linalg.solve(m, a - c0)
    return float(mu), float(lam)


def refine_powell_sabin(
    tri: Triangulation,
    strategy="incenter",
    split_points: dict | None = None,
    edge_points: dict | None = None,
    tol: float = COLLINEARITY_TOL,
) -> PSRefinement:
    """Powell-Sabin 6-split of ``tri``.

    Parameters
    ----------
    strategy : {"incenter", "barycenter"}
        Default split point placement inside macro-triangles.
    split_points : dict, optional
        ``{triangle index: point}`` overrides.
    edge_points : dict, optional
        ``{edge id or (i, j): point}`` overrides for boundary edges.  Entries
        for interior edges are checked against the computed intersection.
    tol : float
        Relative collinearity tolerance for the symmetry test.
    """
    split_points = split_points or {}
    edge_points = {
        (tri.edge_id(*k) if isinstance(k, tuple) else int(k)): np.asarray(v, dtype=float)
        for k, v in (edge_points or {}).items()
    }
    verts = tri.vertices
    centers = np.array(
        [
            split_point(verts[tri.triangles[t]], split_points.get(t, strategy))
            for t in range(tri.n_triangles)
        ]
    )

    epts = np.empty((tri.n_edges, 2))
    lam = np.empty(tri.n_edges)
    mu = np.full(tri.n_edges, np.nan)
    for e, (i, j) in enumerate(tri.edges):
        a, b = verts[i], verts[j]
        ts = tri.edge_triangles[e]
        if len(ts) == 2:
            m, l = _segment_edge_crossing(centers[ts[0]], centers[ts[1]], a, b)
            if not (0 < m < 1 and 0 < l < 1):
                raise RefinementError(
                    f"segment between split points of triangles {ts} misses edge {(int(i), int(j))}"
                )
            mu[e], lam[e] = m, l
            epts[e] = (1 - l) * a + l * b
            if e in edge_points and np.linalg.norm(edge_points[e] - epts[e]) > 1e-9 * tri.scale:
                raise RefinementError(f"edge point for interior edge {e} is inconsistent")
        else:
            p = edge_points.get(e, (a + b) / 2)
            d = b - a
            l = float((p - a) @ d / (d @ d))
            off = abs(_cross(d, p - a)) / np.linalg.norm(d)
            if not (0 < l < 1) or off > 1e-12 * tri.scale:
                raise RefinementError(f"boundary edge point {np.asarray(p).tolist()} not inside edge {e}")
            lam[e] = l
            epts[e] = p

    n_t = tri.n_triangles
    labels = np.empty((n_t, 6, 3), dtype=np.int64)
    micro = np.empty((n_t, 6, 3), dtype=np.int64)
    nv = tri.n_vertices
    for t in range(n_t):
        i, j, k = tri.corners(t)
        for m, (a, b, c) in enumerate(((i, j, k), (j, i, k), (j, k, i), (k, j, i), (k, i, j), (i, k, j))):
            labels[t, m] = (a, b, c)
            micro[t, m] = (a, nv + n_t + tri.edge_id(a, b), nv + t)
    points = np.vstack([verts, centers, epts])

    ps = PSRefinement(
        base=tri,
        split_points=_readonly(centers),
        edge_points=_readonly(epts),
        edge_ratio=_readonly(lam),
        mu=_readonly(mu),
        symmetric=_readonly(np.zeros(n_t, dtype=bool)),
        symmetry_residuals=_readonly(np.zeros((n_t, 3))),
        borderline=_readonly(np.zeros(n_t, dtype=bool)),
        nu=_readonly(np.full((tri.n_edges, 2), np.nan)),
        omega=_readonly(np.zeros((tri.n_edges, 2))),
        w_points=_readonly(np.zeros((tri.n_edges, 2, 2))),
        labels=_readonly(labels),
        micro=_readonly(micro),
        points=_readonly(points),
    )
    flags, residuals, borderline = detect_symmetric(ps, tol)
    if borderline.any():
        logger.warning(
            "triangles %s are near the collinearity threshold; treated as non-symmetric",
            np.flatnonzero(borderline).tolist(),
        )
    ps = dataclasses.replace(
        ps,
        symmetric=_readonly(flags & ~borderline),
        symmetry_residuals=_readonly(residuals),
        borderline=_readonly(borderline),
    )
    return _finish(ps)


def detect_symmetric(ps: PSRefinement, tol: float = COLLINEARITY_TOL):
    """Classify macro-triangles as symmetrically refined.

    For every corner ``v_k`` with opposite edge ``e_ij`` the residual is
    ``|(v_k - v_ijk) x (v_ij - v_ijk)|``.  A triangle is symmetric when all
    three residuals are at most ``tol`` times the product of the two segment
    lengths.

    Returns
    -------
    flags : (T,) bool
    residuals : (T, 3) float
        Raw cross products, ordered by sorted corner ``i, j, k``.
    borderline : (T,) bool
        Symmetric triangles whose worst relative residual exceeds ``tol / 10``.
    """
    tri = ps.base
    residuals = np.zeros((tri.n_triangles, 3))
    relative = np.zeros((tri.n_triangles, 3))
    for t in range(tri.n_triangles):
        c = ps.split_points[t]
        i, j, k = tri.corners(t)
        for s, (corner, a, b) in enumerate(((i, j, k), (j, k, i), (k, i, j))):
            u = tri.vertices[corner] - c
            w = ps.edge_points[tri.edge_id(a, b)] - c
            r = abs(float(_cross(u, w)))
            residuals[t, s] = r
            relative[t, s] = r / (np.linalg.norm(u) * np.linalg.norm(w))
    worst = relative.max(axis=1)
    flags = worst <= tol
    borderline = flags & (worst > tol / 10)
    return flags, residuals, borderline


def compute_nu(ps: PSRefinement, e: int, t: int) -> float:
    """Affine weight ``nu_ij,k`` expressing ``v_k`` on the line through ``v_ijk``.

    Interior edge: ``v_k = (1 - nu) v_ijk + nu v_ijk'``; boundary edge:
    ``v_k = (1 - nu) v_ijk + nu v_ij``.  Only defined for symmetric ``t``.
    """
    if not ps.symmetric[t]:
        raise RefinementError(f"nu is undefined for non-symmetric triangle {t}")
    k = ps.base.third_vertex(t, e)
    c = ps.split_points[t]
    other_t = ps.neighbor(e, t)
    other = ps.edge_points[e] if other_t is None else ps.split_points[other_t]
    d = other - c
    dd = float(d @ d)
    if dd <= (1e-14 * ps.base.scale) ** 2:
        raise RefinementError("degenerate direction while computing nu")
    vk = ps.base.vertices[k]
    nu = float((vk - c) @ d / dd)
    if np.linalg.norm((1 - nu) * c + nu * other - vk) > 1e-8 * ps.base.scale:
        raise RefinementError(f"corner {k} is not on the split line of edge {e}")
    return nu


def compute_w_omega(ps: PSRefinement, e: int) -> list[tuple[np.ndarray, float]]:
    """``(w_ij,k, omega_ij,k)`` for every triangle attached to edge ``e`` (slot order).

    ``w = v_k`` for symmetric triangles, otherwise ``w = v_ijk``.  Interior
    edges solve ``v_ijk = (1 - omega) w_k + omega w_k'``; boundary edges solve
    ``v_ijk = (1 - omega) w_k + omega v_ij``.
    """
    tri = ps.base
    ts = tri.edge_triangles[e]
    ws = [
        tri.vertices[tri.third_vertex(t, e)] if ps.symmetric[t] else ps.split_points[t]
        for t in ts
    ]
    ends = ws[::-1] if len(ts) == 2 else [ps.edge_points[e]]
    out = []
    for t, w, other in zip(ts, ws, ends):
        d = other - w
        dd = float(d @ d)
        if dd <= (1e-14 * tri.scale) ** 2:
            raise RefinementError(f"coincident w-points on edge {e}")
        omega = float((ps.split_points[t] - w) @ d / dd)
        if not ps.symmetric[t]:
            omega = 0.0
        if not (-1e-12 <= omega <= 1 + 1e-12):
            raise RefinementError(f"omega {omega} outside [0, 1] on edge {e}")
        out.append((np.array(w), min(max(omega, 0.0), 1.0)))
    return out


def weight_identity_residuals(ps: PSRefinement) -> list[dict]:
    """Residuals of the nu/omega identities for every (symmetric triangle, edge) pair.

    Interior: ``(1 - nu_k)(1 - omega_k) + nu_k omega_k' - 1``;
    boundary: ``(1 - nu_k)(1 - omega_k) - 1``.
    """
    rows = []
    for t in ps.symmetric_triangles:
        for e in ps.base.triangle_edges(t):
            s = ps.slot(e, t)
            nu, om = ps.nu[e, s], ps.omega[e, s]
            if ps.base.boundary[e]:
                value = (1 - nu) * (1 - om)
                kind = "boundary"
            else:
                value = (1 - nu) * (1 - om) + nu * ps.omega[e, 1 - s]
                kind = "interior"
            rows.append({"triangle": t, "edge": e, "kind": kind, "residual": abs(value - 1.0)})
    return rows


def _finish(ps: PSRefinement) -> PSRefinement:
    tri = ps.base
    nu = np.full((tri.n_edges, 2), np.nan)
    omega = np.zeros((tri.n_edges, 2))
    w_points = np.zeros((tri.n_edges, 2, 2))
    for e in range(tri.n_edges):
        for s, (t, (w, om)) in enumerate(zip(tri.edge_triangles[e], compute_w_omega(ps, e))):
            w_points[e, s] = w
            omega[e, s] = om
            if ps.symmetric[t]:
                nu[e, s] = compute_nu(ps, e, t)
        if tri.boundary[e]:
            omega[e, 1] = np.nan
    return dataclasses.replace(
        ps, nu=_readonly(nu), omega=_readonly(omega), w_points=_readonly(w_points)
    )
