"""Cubic C1 Powell-Sabin splines with simplex B-spline bases and a reduced super-smooth subspace."""

from .bezier import CubicPatch, blossom, check_smoothness, from_polynomial, polarize
from .c1space import C1Space
from .mesh import (
    PSRefinement,
    Triangulation,
    build_triangulation,
    refine_powell_sabin,
    three_directional_mesh,
    uniform_refine,
)
from .reduced import ReducedSpace, build_recombination, dimension_report, verify_supersmoothness
from .spline import SplineFunction, eval_spline, locate

__version__ = "0.1.0"

__all__ = [
    "C1Space",
    "CubicPatch",
    "PSRefinement",
    "ReducedSpace",
    "SplineFunction",
    "Triangulation",
    "blossom",
    "build_recombination",
    "build_triangulation",
    "check_smoothness",
    "dimension_report",
    "eval_spline",
    "from_polynomial",
    "locate",
    "polarize",
    "refine_powell_sabin",
    "three_directional_mesh",
    "uniform_refine",
    "verify_supersmoothness",
]
