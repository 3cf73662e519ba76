"""Command-line front end: ``psspline <command> [options]``.

Commands
--------
refine       mesh.json -> ps.json
basis        dimension report and duality residual of a space
check        per-edge smoothness residuals of the basis (or of a spline) as CSV
fit          least-squares fit of CSV samples (x,y,value) -> spline.json
eval         sample a spline on a grid -> CSV (x,y,value)
convergence  uniform-refinement study -> per-level CSV
export       BB control net of a spline as CSV, or the refinement as ps.json

Failures exit with status 1 and a JSON object ``{"error": ..., "type": ...}``
on stderr.  Summaries are printed to stdout as JSON.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from . import io
from .bezier import eval_monomials
from .c1space import threads_from_env
from .fit import (
    FitProblem,
    convergence_study,
    error_norms,
    jittered_samples,
    least_squares_fit,
    make_space,
    sin_product,
)
from .mesh import COLLINEARITY_TOL, refine_powell_sabin, three_directional_mesh
from .reduced import dimension_report
from .spline import point_in_domain, smoothness_operator, smoothness_residuals, split_point_jet_operator

SMOOTH_RTOL = 1e-10

FUNCTIONS = {
    "sin": sin_product,
    "one": lambda p: np.ones(len(np.atleast_2d(p))),
    "cubic": lambda p: eval_monomials([0, 0, 0, 0, 0, 0, 0, 1, 0, -2], p),
    "franke": lambda p: _franke(np.atleast_2d(p)),
}


def _franke(p):
    x, y = 9 * p[:, 0], 9 * p[:, 1]
    return (
        0.75 * np.exp(-((x - 2) ** 2 + (y - 2) ** 2) / 4)
        + 0.75 * np.exp(-((x + 1) ** 2) / 49 - (y + 1) / 10)
        + 0.5 * np.exp(-((x - 7) ** 2 + (y - 3) ** 2) / 4)
        - 0.2 * np.exp(-((x - 4) ** 2) - (y - 7) ** 2)
    )


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


def _emit(obj, stream=None):
    print(json.dumps(obj, indent=1, default=_jsonable), file=stream or sys.stdout)


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)


def _load_ps(args):
    if args.mesh:
        return io.read_ps(args.mesh, args.split, args.tol)
    if getattr(args, "grid_mesh", None):
        return refine_powell_sabin(three_directional_mesh(args.grid_mesh), args.split, tol=args.tol)
    raise CLIError("--mesh is required")


def cmd_refine(args):
    ps = _load_ps(args)
    text = io.write_ps(ps, args.out)
    if args.out is None:
        print(text)
    else:
        _emit({"out": args.out, "triangles": ps.base.n_triangles, "symmetric": int(ps.symmetric.sum())})
    return 0


def cmd_basis(args):
    ps = _load_ps(args)
    space = make_space(ps, args.space, args.threads)
    dual = space.duality_matrix()
    resid = float(np.abs(dual - np.eye(space.dim)).max())
    c1 = space if args.space == "c1" else space.c1
    report = {
        "space": args.space,
        "dim": space.dim,
        "dimension_report": dimension_report(ps),
        "duality_residual": resid,
        "local_condition_max": float(c1.local_conditions.max()),
        "symmetric_triangles": ps.symmetric_triangles,
        "threads": args.threads,
    }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=1, default=_jsonable)
    _emit(report)
    return 0 if resid < 1e-9 else 1


def cmd_check(args):
    if args.spline:
        space, _, s = io.read_spline(args.spline, args.threads)
        ps = space.ps
        bb = s.coeffs.reshape(-1, 1)
    else:
        ps = _load_ps(args)
        space = make_space(ps, args.space, args.threads)
        bb = space.synthesis.toarray()
    scale = np.maximum(np.abs(bb).max(axis=0), 1e-300)
    op = smoothness_operator(ps, args.order)
    res = (smoothness_residuals(op, bb, args.order) / scale).max(axis=2)  # (edges, order+1)
    rows = []
    for n, e in enumerate(op.edges):
        for k in range(1, args.order + 1):
            rows.append((n, e.kind, e.macro, bool(ps.symmetric[e.macro]), k, res[n, k]))
    if args.out:
        io.write_csv(args.out, ["edge", "kind", "macro", "symmetric", "order", "max_residual"], rows)
    c1_max = float(res[:, 1].max())
    summary = {"order": args.order, "edges": len(op.edges), "c1_max": c1_max, "c1_pass": c1_max < SMOOTH_RTOL}
    if args.order >= 2:
        kinds = np.array([e.kind for e in op.edges])
        macros = np.array([e.macro for e in op.edges])
        sym = ps.symmetric[macros]
        jet, _ = split_point_jet_operator(ps)

        def worst(mask):
            return float(res[mask, 2].max()) if mask.any() else 0.0

        summary.update(
            {
                "c2_split_edges": worst(kinds == "split"),
                "c2_split_points": float((np.abs(jet @ bb) / scale).max()),
                "c2_inside_symmetric": worst((kinds != "macro") & sym),
                "c2_vertex_edges_nonsymmetric": worst((kinds == "vertex") & ~sym),
                "c2_macro_edges": worst(kinds == "macro"),
            }
        )
    _emit(summary)
    return 0 if summary["c1_pass"] else 1


def cmd_fit(args):
    ps = _load_ps(args)
    space = make_space(ps, args.space, args.threads)
    if args.samples:
        pts, vals = io.read_samples(args.samples)
        f = None
    else:
        f = FUNCTIONS[args.function]
        per_side = int(math.ceil(math.sqrt(args.samples_per_dof * space.dim)))
        pts = jittered_samples(ps.base, per_side, args.seed, ps)
        vals = f(pts)
    outside = ~point_in_domain(ps, pts)
    if outside.any():
        raise CLIError(f"{int(outside.sum())} samples lie outside the domain")
    result = least_squares_fit(FitProblem(pts, vals, space, args.ridge))
    report = result.report()
    report["space"] = args.space
    if f is not None:
        report.update({f"error_{k}": v for k, v in error_norms(result.spline, f).items()})
    if args.out:
        io.write_spline(space, result.coefficients, args.out, patches=args.patches)
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report, fh, indent=1, default=_jsonable)
    _emit(report)
    return 0


def _grid(ps, n):
    lo = ps.base.vertices.min(axis=0)
    hi = ps.base.vertices.max(axis=0)
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    pts = np.stack(np.meshgrid(xs, ys, indexing="xy"), -1).reshape(-1, 2)
    return pts[point_in_domain(ps, pts)]


def cmd_eval(args):
    if not args.spline:
        raise CLIError("--spline is required")
    space, _, s = io.read_spline(args.spline, args.threads)
    pts = _grid(space.ps, args.grid)
    vals = s(pts)
    rows = [(float(x), float(y), float(v)) for (x, y), v in zip(pts, vals)]
    if args.out:
        io.write_csv(args.out, ["x", "y", "value"], rows)
    else:
        print("x,y,value")
        for r in rows:
            print(",".join(repr(v) for v in r))
    return 0


def cmd_convergence(args):
    if args.mesh:
        base = io.read_mesh(args.mesh)
    else:
        base = three_directional_mesh(args.grid_mesh or 3)
    rep = convergence_study(
        FUNCTIONS[args.function],
        base,
        args.levels,
        args.space,
        args.split,
        args.samples_per_dof,
        args.seed,
        args.threads,
    )
    header = ["level", "h", "dofs", "samples", "l2", "linf", "residual", "condition", "order"]
    rows = [[r[k] if r[k] is not None else "" for k in header] for r in rep.rows()]
    if args.out:
        io.write_csv(args.out, header, rows)
    _emit({"space": args.space, "levels": rep.rows(), "l2_ratios": rep.l2_ratios})
    return 0


def cmd_export(args):
    if args.spline:
        _, _, s = io.read_spline(args.spline, args.threads)
        rows = list(io.bb_net_rows(s))
        header = ["micro", "a", "b", "c", "x", "y", "coefficient"]
        if args.out:
            io.write_csv(args.out, header, rows)
        else:
            print(",".join(header))
            for r in rows:
                print(",".join(repr(v) if isinstance(v, float) else str(v) for v in r))
        return 0
    ps = _load_ps(args)
    text = io.write_ps(ps, args.out)
    if args.out is None:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--mesh", help="mesh.json or ps.json")
    common.add_argument("--out", help="output path")
    common.add_argument("--space", choices=("c1", "reduced"), default="reduced")
    common.add_argument("--split", choices=("incenter", "barycenter"), default="incenter")
    common.add_argument("--tol", type=float, default=COLLINEARITY_TOL, help="relative collinearity tolerance")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="worker threads (PSPLINE_THREADS overrides)")
    common.add_argument("--grid-mesh", type=int, default=None, help="use an n x n three-directional mesh")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="psspline", description="Powell-Sabin spline bases and fitting")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("refine", parents=[common], help="Powell-Sabin refinement to ps.json")
    p = sub.add_parser("basis", parents=[common], help="dimension report and duality residual")
    p.add_argument("--report", action="store_true", help="accepted for compatibility; the report is always printed")
    p = sub.add_parser("check", parents=[common], help="per-edge smoothness residuals")
    p.add_argument("--order", type=int, choices=(1, 2), default=1)
    p.add_argument("--spline", help="check a spline.json instead of the basis")
    p = sub.add_parser("fit", parents=[common], help="least-squares fit")
    p.add_argument("--samples", help="CSV with x,y,value")
    p.add_argument("--function", choices=sorted(FUNCTIONS), default="sin", help="sampled when --samples is absent")
    p.add_argument("--samples-per-dof", type=float, default=4.0)
    p.add_argument("--ridge", type=float, default=None)
    p.add_argument("--report", help="write the fit report JSON here")
    p.add_argument("--patches", action="store_true", help="include the BB patch dump in spline.json")
    p = sub.add_parser("eval", parents=[common], help="evaluate a spline on a grid")
    p.add_argument("--spline", help="spline.json")
    p.add_argument("--grid", type=int, default=51, help="grid points per axis")
    p = sub.add_parser("convergence", parents=[common], help="convergence study")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--function", choices=sorted(FUNCTIONS), default="sin")
    p.add_argument("--samples-per-dof", type=float, default=4.0)
    p = sub.add_parser("export", parents=[common], help="BB net CSV of a spline, or ps.json of a mesh")
    p.add_argument("--spline", help="spline.json")
    return parser


COMMANDS = {
    "refine": cmd_refine,
    "basis": cmd_basis,
    "check": cmd_check,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "convergence": cmd_convergence,
    "export": cmd_export,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
        args.threads = threads_from_env(args.threads)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        _emit({"error": str(exc), "type": type(exc).__name__}, sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
