"""JSON and CSV formats for meshes, refinements and splines.

``mesh.json``::

    {"vertices": [[x, y], ...], "triangles": [[i, j, k], ...]}

``ps.json`` adds ``"split_points"`` (one per triangle), ``"edge_splits"``
(``{"edge": [i, j], "point": [x, y]}`` per edge, sorted by edge) and
``"symmetric"`` (one flag per triangle).  ``spline.json`` holds ``"space"``,
``"mesh"`` (a ps.json object), ``"coefficients"`` in the canonical order of
the space and optionally ``"patches"`` (per micro-triangle, 10 BB
coefficients).  Python's float repr round-trips exactly, so coordinates
survive a write/read cycle bit for bit.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .mesh import (
    COLLINEARITY_TOL,
    PSRefinement,
    RefinementError,
    Triangulation,
    build_triangulation,
    refine_powell_sabin,
)
from .spline import SplineFunction


def _load(src):
    if isinstance(src, dict):
        return src
    return json.loads(Path(src).read_text())


def _dump(obj, path):
    text = json.dumps(obj, indent=1)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def mesh_to_dict(tri: Triangulation) -> dict:
    return {"vertices": tri.vertices.tolist(), "triangles": tri.triangles.tolist()}


def mesh_from_dict(data: dict) -> Triangulation:
    try:
        return build_triangulation(data["vertices"], data["triangles"])
    except KeyError as exc:
        raise ValueError(f"mesh JSON lacks field {exc}") from None


def read_mesh(src) -> Triangulation:
    return mesh_from_dict(_load(src))


def write_mesh(tri: Triangulation, path=None) -> str:
    return _dump(mesh_to_dict(tri), path)


def ps_to_dict(ps: PSRefinement) -> dict:
    out = mesh_to_dict(ps.base)
    out["split_points"] = ps.split_points.tolist()
    out["edge_splits"] = [
        {"edge": [int(i), int(j)], "point": ps.edge_points[e].tolist()} for e, (i, j) in enumerate(ps.base.edges)
    ]
    out["symmetric"] = [bool(f) for f in ps.symmetric]
    return out


def ps_from_dict(data: dict, split: str = "incenter", tol: float = COLLINEARITY_TOL) -> PSRefinement:
    """Rebuild a refinement; missing split data falls back to ``split``.

    Symmetry flags in the file may only drop triangles from the detected
    set; claiming symmetry for a non-collinear triangle raises
    :class:`RefinementError`.
    """
    tri = mesh_from_dict(data)
    splits = {t: np.asarray(p, dtype=float) for t, p in enumerate(data.get("split_points") or [])}
    if splits and len(splits) != tri.n_triangles:
        raise ValueError("split_points must list one point per triangle")
    edges = {}
    for item in data.get("edge_splits") or []:
        i, j = item["edge"]
        edges[tri.edge_id(int(i), int(j))] = np.asarray(item["point"], dtype=float)
    ps = refine_powell_sabin(tri, split, split_points=splits, edge_points=edges, tol=tol)
    flags = data.get("symmetric")
    if flags is not None:
        flags = np.asarray(flags, dtype=bool)
        if np.any(flags & ~ps.symmetric):
            raise RefinementError(
                f"triangles {np.flatnonzero(flags & ~ps.symmetric).tolist()} are flagged symmetric but are not"
            )
        ps = ps.with_symmetric(flags)
    return ps


def read_ps(src, split: str = "incenter", tol: float = COLLINEARITY_TOL) -> PSRefinement:
    """Read ``ps.json``, or refine a plain ``mesh.json`` with ``split``."""
    return ps_from_dict(_load(src), split, tol)


def write_ps(ps: PSRefinement, path=None) -> str:
    return _dump(ps_to_dict(ps), path)


def spline_to_dict(space, coeffs, patches: bool = False) -> dict:
    out = {"space": space.name, "mesh": ps_to_dict(space.ps), "coefficients": np.asarray(coeffs).tolist()}
    if patches:
        out["patches"] = space.synthesize(coeffs).coeffs.tolist()
    return out


def write_spline(space, coeffs, path=None, patches: bool = False) -> str:
    return _dump(spline_to_dict(space, coeffs, patches), path)


def read_spline(src, threads: int | None = None):
    """Return ``(space, coefficients, spline)`` from a spline.json."""
    from .fit import make_space

    data = _load(src)
    ps = ps_from_dict(data["mesh"])
    space = make_space(ps, data["space"], threads)
    coeffs = np.asarray(data["coefficients"], dtype=float)
    if coeffs.shape != (space.dim,):
        raise ValueError(f"spline has {coeffs.size} coefficients, space needs {space.dim}")
    return space, coeffs, space.synthesize(coeffs)


def read_samples(path) -> tuple[np.ndarray, np.ndarray]:
    """CSV with columns x, y, value; a non-numeric header line is skipped."""
    rows = []
    with open(path, newline="") as fh:
        for n, row in enumerate(csv.reader(fh)):
            if not row or row[0].startswith("#"):
                continue
            try:
                vals = [float(v) for v in row[:3]]
            except ValueError:
                if n == 0:
                    continue
                raise ValueError(f"bad sample row {n + 1}: {row}") from None
            if len(vals) < 3:
                raise ValueError(f"sample row {n + 1} needs x,y,value")
            rows.append(vals)
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return arr[:, :2], arr[:, 2]


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def bb_net_rows(s: SplineFunction):
    """Rows ``(micro, a, b, c, x, y, coefficient)`` of the BB control net."""
    from .bezier import MULTI_INDICES

    for m in range(s.ps.n_micro):
        corners = s.ps.micro_points(m)
        for n, alpha in enumerate(MULTI_INDICES):
            x, y = np.asarray(alpha) @ corners / 3
            yield (m, *alpha, float(x), float(y), float(s.coeffs[m, n]))
