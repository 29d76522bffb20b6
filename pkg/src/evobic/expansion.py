"""Turn column series into explicit biclusters and widen them with related rows.

Rows increasing along the series are ``exact``. With expansion enabled, rows
increasing along the reversed series are added as ``negative`` and rows that
break at most ``approx_violations`` adjacent comparisons as ``approximate``.
A row keeps the first flag it qualifies for in that order. The fitness of an
expanded bicluster is left at the value of its exact core.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .datamodel import Bicluster, ExpressionMatrix
from .fitness import FitnessParams, default_sigma, fitness_array


def _increasing_pairs(matrix: ExpressionMatrix, series: Sequence[int], tolerance: float) -> np.ndarray:
    vals = matrix.values[:, list(series)]
    return vals[:, 1:] > vals[:, :-1] - tolerance


def match_mask(matrix: ExpressionMatrix, series: Sequence[int], tolerance: float = 0.0) -> np.ndarray:
    """Boolean mask of the rows increasing along ``series``."""
    return _increasing_pairs(matrix, series, tolerance).all(axis=1)


def assign_rows(matrix: ExpressionMatrix, series: Sequence[int], tolerance: float = 0.0) -> list[int]:
    return np.flatnonzero(match_mask(matrix, series, tolerance)).tolist()


def expand_bicluster(matrix: ExpressionMatrix, bicluster: Bicluster, allow_negative: bool = True,
                     approx_violations: int = 1, tolerance: float = 0.0) -> Bicluster:
    if approx_violations < 0:
        raise ValueError("approx_violations must be >= 0")
    series = list(bicluster.series)
    flags = {r: f for r, f in zip(bicluster.rows, bicluster.row_flags)}
    if allow_negative:
        for r in np.flatnonzero(match_mask(matrix, series[::-1], tolerance)).tolist():
            flags.setdefault(r, "negative")
    if approx_violations > 0:
        violations = (~_increasing_pairs(matrix, series, tolerance)).sum(axis=1)
        for r in np.flatnonzero(violations <= approx_violations).tolist():
            flags.setdefault(r, "approximate")
    rows = sorted(flags)
    return Bicluster(rows, bicluster.series, bicluster.fitness, tuple(flags[r] for r in rows))


def resolve(matrix: ExpressionMatrix, series_list: Sequence[Sequence[int]], params: FitnessParams | None = None,
            tolerance: float = 0.0, allow_negative: bool = True, approx_violations: int = 1) -> list[Bicluster]:
    """Exact row assignment, fitness and expansion for each series, preserving order."""
    params = params or FitnessParams(default_sigma(matrix.n_rows))
    out = []
    for s in series_list:
        rows = assign_rows(matrix, s, tolerance)
        fit = float(fitness_array([len(rows)], [len(s)], params.sigma)[0])
        core = Bicluster(rows, tuple(s), fit)
        out.append(expand_bicluster(matrix, core, allow_negative, approx_violations, tolerance))
    return out
