"""Approximation with Powell-Sabin spline spaces.

Exact projection of cubics through the dual functionals, discrete least
squares on scattered samples, quadrature error norms and a convergence
study under uniform refinement.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .c1space import C1Space
from .mesh import PSRefinement, Triangulation, refine_powell_sabin, uniform_refine
from .reduced import ReducedSpace, dimension_report
from .spline import SplineFunction, collocation_bb, point_in_domain

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-12

_B1 = (6 - math.sqrt(15)) / 21
_B2 = (6 + math.sqrt(15)) / 21
_W1 = (155 - math.sqrt(15)) / 1200
_W2 = (155 + math.sqrt(15)) / 1200
# degree-5 rule on the reference triangle; weights sum to one
QUAD_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [1 - 2 * _B1, _B1, _B1],
        [_B1, 1 - 2 * _B1, _B1],
        [_B1, _B1, 1 - 2 * _B1],
        [1 - 2 * _B2, _B2, _B2],
        [_B2, 1 - 2 * _B2, _B2],
        [_B2, _B2, 1 - 2 * _B2],
    ]
)
QUAD_WEIGHTS = np.array([9 / 40, _W1, _W1, _W1, _W2, _W2, _W2])


class RankDeficientError(np.linalg.LinAlgError):
    """The collocation matrix does not have full column rank."""


def make_space(ps: PSRefinement, kind: str = "reduced", threads: int | None = None):
    if kind == "c1":
        return C1Space(ps, threads=threads)
    if kind == "reduced":
        return ReducedSpace(C1Space(ps, threads=threads))
    raise ValueError(f"unknown space {kind!r}; expected 'c1' or 'reduced'")


def project_cubic(mono, space) -> np.ndarray:
    """Coefficients of a cubic (monomial form) in ``space``; exact by duality."""
    return space.polynomial_coefficients(np.asarray(mono, dtype=float))


@dataclass
class FitProblem:
    points: np.ndarray
    values: np.ndarray
    space: object
    ridge: float | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.asarray(self.values, dtype=float).ravel()
        if len(self.points) != len(self.values):
            raise ValueError("points and values differ in length")


@dataclass
class FitResult:
    coefficients: np.ndarray
    spline: SplineFunction
    residual_norm: float
    max_residual: float
    rank: int
    condition: float
    n_samples: int
    dim: int
    ridge: float | None = None

    def report(self) -> dict:
        return {
            "dim": self.dim,
            "samples": self.n_samples,
            "rank": self.rank,
            "condition": self.condition,
            "residual_l2": self.residual_norm,
            "residual_max": self.max_residual,
            "ridge": self.ridge,
        }


def least_squares_fit(problem: FitProblem) -> FitResult:
    """Minimize the sum of squared residuals at the sample points.

    The dense collocation matrix is solved by an SVD-based least-squares
    driver, never by normal equations.

    Raises
    ------
    OutsideDomainError
        If a sample lies outside the triangulated domain.
    RankDeficientError
        If the collocation matrix is rank deficient and no ridge weight
        was given.
    """
    space = problem.space
    a = space.collocation(problem.points).toarray()
    y = problem.values
    if len(y) < space.dim and not problem.ridge:
        raise RankDeficientError(f"{len(y)} samples for {space.dim} unknowns")
    sv = la.svdvals(a)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv.size else 0
    cond = float(sv[0] / sv[-1]) if sv.size and sv[-1] > 0 else math.inf
    if rank < space.dim or len(y) < space.dim:
        if not problem.ridge:
            raise RankDeficientError(f"collocation rank {rank} < dimension {space.dim}")
        logger.warning("rank-deficient collocation (%d < %d); ridge %.3g engaged", rank, space.dim, problem.ridge)
    if problem.ridge:
        a_solve = np.vstack([a, math.sqrt(problem.ridge) * np.eye(space.dim)])
        y_solve = np.concatenate([y, np.zeros(space.dim)])
    else:
        a_solve, y_solve = a, y
    coeffs, *_ = la.lstsq(a_solve, y_solve, lapack_driver="gelsd")
    res = a @ coeffs - y
    return FitResult(
        coeffs,
        space.synthesize(coeffs),
        float(np.linalg.norm(res)),
        float(np.abs(res).max()) if res.size else 0.0,
        rank,
        cond,
        len(y),
        space.dim,
        problem.ridge,
    )


def jittered_samples(tri: Triangulation, per_side: int, seed: int = 0, ps: PSRefinement | None = None) -> np.ndarray:
    """One uniformly jittered point per cell of a ``per_side``² grid over the bounding box.

    Points outside the domain are dropped, which only matters for
    non-rectangular domains.
    """
    rng = np.random.default_rng(seed)
    lo = tri.vertices.min(axis=0)
    span = np.ptp(tri.vertices, axis=0)
    ij = np.stack(np.meshgrid(np.arange(per_side), np.arange(per_side), indexing="ij"), -1).reshape(-1, 2)
    pts = lo + span * (ij + rng.random(ij.shape)) / per_side
    if ps is not None:
        pts = pts[point_in_domain(ps, pts)]
    return pts


def quadrature_points(ps: PSRefinement) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Points, weights (area-scaled) and micro ids of the 7-point rule on every micro-triangle."""
    corners = ps.points[ps.micro.reshape(-1, 3)]  # (6T, 3, 2)
    pts = np.einsum("qk,mkd->mqd", QUAD_BARY, corners)
    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 2] - corners[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    w = area[:, None] * QUAD_WEIGHTS[None]
    micro = np.repeat(np.arange(len(corners)), len(QUAD_WEIGHTS))
    return pts.reshape(-1, 2), w.ravel(), micro


def _sup_points(ps: PSRefinement, n: int = 4):
    """Barycentric lattice of order ``n`` on every micro-triangle."""
    lattice = np.array([(a, b, n - a - b) for a in range(n + 1) for b in range(n + 1 - a)], dtype=float) / n
    corners = ps.points[ps.micro.reshape(-1, 3)]
    pts = np.einsum("qk,mkd->mqd", lattice, corners)
    return pts.reshape(-1, 2), np.repeat(np.arange(len(corners)), len(lattice))


def error_norms(s: SplineFunction, f) -> dict:
    """L2 error by 7-point quadrature per micro-triangle and a sampled max error.

    ``f`` maps an ``(n, 2)`` array to ``n`` values.
    """
    ps = s.ps
    flat = s.coeffs.ravel()
    pts, w, micro = quadrature_points(ps)
    err = collocation_bb(ps, pts, micro=micro) @ flat - f(pts)
    l2 = math.sqrt(float(w @ err**2))
    spts, smicro = _sup_points(ps)
    sup_err = np.abs(collocation_bb(ps, spts, micro=smicro) @ flat - f(spts))
    linf = float(max(sup_err.max(), np.abs(err).max()))
    return {"l2": l2, "linf": linf, "cells": ps.n_micro}


@dataclass
class ConvergenceReport:
    space: str
    levels: list = field(default_factory=list)

    @property
    def l2_ratios(self) -> list[float]:
        e = [lv["l2"] for lv in self.levels]
        return [a / b if b > 0 else math.inf for a, b in zip(e, e[1:])]

    @property
    def orders(self) -> list[float | None]:
        """Observed L2 orders; ``None`` when both errors sit at round-off."""
        out = []
        for a, b in zip(self.levels, self.levels[1:]):
            if a["l2"] < 1e-12 or b["l2"] < 1e-12:
                out.append(None)
            else:
                out.append(math.log(a["l2"] / b["l2"]) / math.log(a["h"] / b["h"]))
        return out

    def rows(self) -> list[dict]:
        orders = [None] + self.orders
        return [dict(lv, order=o) for lv, o in zip(self.levels, orders)]


def convergence_study(
    f,
    base: Triangulation,
    levels: int = 3,
    space: str = "reduced",
    split: str = "barycenter",
    samples_per_dof: float = 4.0,
    seed: int = 0,
    threads: int | None = None,
) -> ConvergenceReport:
    """Least-squares fits of ``f`` on ``base`` refined uniformly ``0 .. levels-1`` times.

    Each level uses a jittered tensor grid with about ``samples_per_dof``
    samples per degree of freedom.
    """
    if levels < 2:
        raise ValueError("levels must be at least 2")
    report = ConvergenceReport(space)
    for lev in range(levels):
        tri = uniform_refine(base, lev)
        ps = refine_powell_sabin(tri, split)
        sp_ = make_space(ps, space, threads)
        dims = dimension_report(ps)
        expected = dims["full"] if space == "c1" else dims["reduced"]
        if sp_.dim != expected:
            raise AssertionError(f"dimension {sp_.dim} differs from formula {expected}")
        per_side = int(math.ceil(math.sqrt(samples_per_dof * sp_.dim)))
        pts = jittered_samples(tri, per_side, seed + lev, ps)
        fit = least_squares_fit(FitProblem(pts, f(pts), sp_))
        errs = error_norms(fit.spline, f)
        report.levels.append(
            {
                "level": lev,
                "h": tri.max_edge_length(),
                "dofs": sp_.dim,
                "samples": len(pts),
                "l2": errs["l2"],
                "linf": errs["linf"],
                "residual": fit.residual_norm,
                "condition": fit.condition,
            }
        )
        logger.info("level %d: dofs %d, L2 %.3e", lev, sp_.dim, errs["l2"])
    return report


def sin_product(points) -> np.ndarray:
    p = np.atleast_2d(points)
    return np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])
