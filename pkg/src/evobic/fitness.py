"""Chunk-parallel fitness evaluation of a whole population.

Rows of the matrix are split into contiguous chunks; each worker counts, for
every individual, how many rows of its chunk increase strictly along the
individual's column series. Partial counts are summed, so the result does not
depend on the chunking or on the number of workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datamodel import CbfPopulation, ExpressionMatrix

# rows gathered per numpy block; bounds the temporary (block x total series length) array
_BLOCK_ROWS = 1024


def default_sigma(n_rows: int) -> int:
    return max(math.ceil(0.02 * n_rows), 4)


def resolve_workers(threads: int | None) -> int:
    """``0``/``None`` means one worker per available CPU."""
    if threads:
        if threads < 0:
            raise ValueError("threads must be >= 0")
        return int(threads)
    try:
        return max(len(os.sched_getaffinity(0)), 1)
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


@dataclass(frozen=True)
class ChunkPlan:
    chunks: tuple[tuple[int, int], ...]
    worker_count: int = 1

    def __post_init__(self):
        chunks = tuple((int(lo), int(hi)) for lo, hi in self.chunks)
        if not chunks or chunks[0][0] != 0:
            raise ValueError("chunks must start at row 0")
        for (lo, hi), (nxt, _) in zip(chunks, chunks[1:] + ((chunks[-1][1], 0),)):
            if hi <= lo or nxt != hi:
                raise ValueError("chunks must be non-empty, disjoint and contiguous")
        if self.worker_count < 1:
            raise ValueError("worker_count must be positive")
        object.__setattr__(self, "chunks", chunks)

    @property
    def n_rows(self) -> int:
        return self.chunks[-1][1]

    @classmethod
    def even(cls, n_rows: int, workers: int = 1, n_chunks: int | None = None) -> "ChunkPlan":
        """Contiguous chunks of ``ceil(n_rows / n_chunks)`` rows (``n_chunks`` defaults to ``workers``)."""
        n_chunks = min(n_chunks or workers, n_rows)
        step = -(-n_rows // n_chunks)
        chunks = tuple((lo, min(lo + step, n_rows)) for lo in range(0, n_rows, step))
        return cls(chunks, workers)

    @classmethod
    def from_bounds(cls, bounds: Sequence[int], workers: int = 1) -> "ChunkPlan":
        return cls(tuple(zip(bounds[:-1], bounds[1:])), workers)


@dataclass(frozen=True)
class FitnessParams:
    sigma: int = 4

    def __post_init__(self):
        if int(self.sigma) != self.sigma or self.sigma < 2:
            raise ValueError("sigma must be an integer >= 2")


def row_matches(matrix: ExpressionMatrix, row: int, series: Sequence[int], tolerance: float = 0.0) -> bool:
    vals = matrix.values[row]
    return all(vals[b] > vals[a] - tolerance for a, b in zip(series, series[1:]))


def fitness_array(match_counts, series_lens, sigma: int) -> np.ndarray:
    """``2**min(|I| - sigma, 0) * |J| * ln(|I| - 1)`` for ``|I| > 1``, else 0."""
    rows = np.asarray(match_counts, dtype=np.float64)
    cols = np.asarray(series_lens, dtype=np.float64)
    with np.errstate(divide="ignore"):
        score = np.exp2(np.minimum(rows - sigma, 0.0)) * cols * np.log(np.maximum(rows - 1.0, 1.0))
    return np.where(rows > 1, np.maximum(score, 0.0), 0.0)


def fitness(match_count: int, series_len: int, params: FitnessParams) -> float:
    if series_len < 2:
        raise ValueError("series_len must be >= 2")
    return float(fitness_array([match_count], [series_len], params.sigma)[0])


def _count_block(values_t: np.ndarray, cbf: CbfPopulation, tolerance: float) -> np.ndarray:
    """Match counts over a column-major block (``values_t`` is columns x rows)."""
    gathered = values_t.take(cbf.col_indices, axis=0)
    if tolerance:
        broken = gathered[1:] <= gathered[:-1] - tolerance
    else:
        broken = gathered[1:] <= gathered[:-1]
    # the pair straddling two neighbouring individuals is not a constraint
    broken[cbf.offsets[1:-1] - 1] = False
    failed = np.logical_or.reduceat(broken, cbf.offsets[:-1], axis=0)
    return values_t.shape[1] - np.count_nonzero(failed, axis=1).astype(np.int64)


def _count_chunk(values_t: np.ndarray, lo: int, hi: int, cbf: CbfPopulation, tolerance: float) -> np.ndarray:
    total = np.zeros(len(cbf), dtype=np.int64)
    for start in range(lo, hi, _BLOCK_ROWS):
        total += _count_block(values_t[:, start : min(start + _BLOCK_ROWS, hi)], cbf, tolerance)
    return total


def count_matches(
    matrix: ExpressionMatrix,
    population: CbfPopulation,
    plan: ChunkPlan | None = None,
    tolerance: float = 0.0,
    executor: ThreadPoolExecutor | None = None,
) -> np.ndarray:
    """Number of matching rows for every individual of ``population``."""
    plan = plan or ChunkPlan.even(matrix.n_rows)
    if plan.n_rows != matrix.n_rows:
        raise ValueError("chunk plan does not cover the matrix rows")
    values = matrix.values_t
    if executor is None and plan.worker_count > 1 and len(plan.chunks) > 1:
        with ThreadPoolExecutor(plan.worker_count) as pool:
            return count_matches(matrix, population, plan, tolerance, pool)
    if executor is None or len(plan.chunks) == 1:
        parts = [_count_chunk(values, lo, hi, population, tolerance) for lo, hi in plan.chunks]
    else:
        futures = [executor.submit(_count_chunk, values, lo, hi, population, tolerance) for lo, hi in plan.chunks]
        parts = [f.result() for f in futures]
    return np.sum(parts, axis=0, dtype=np.int64)


def evaluate_population(
    matrix: ExpressionMatrix,
    population: CbfPopulation,
    plan: ChunkPlan | None = None,
    params: FitnessParams | None = None,
    tolerance: float = 0.0,
) -> np.ndarray:
    params = params or FitnessParams(default_sigma(matrix.n_rows))
    counts = count_matches(matrix, population, plan, tolerance)
    return fitness_array(counts, population.lengths(), params.sigma)


class FitnessEngine:
    """Reusable evaluator holding a matrix, a chunk plan and a worker pool.

    Use as a context manager, or call :meth:`close` to release the pool.
    """

    def __init__(self, matrix: ExpressionMatrix, params: FitnessParams | None = None,
                 threads: int | None = 0, tolerance: float = 0.0):
        self.matrix = matrix
        self.params = params or FitnessParams(default_sigma(matrix.n_rows))
        self.tolerance = float(tolerance)
        workers = min(resolve_workers(threads), matrix.n_rows)
        self.plan = ChunkPlan.even(matrix.n_rows, workers)
        self._pool = ThreadPoolExecutor(workers) if workers > 1 else None
        self.n_evaluated = 0

    def count(self, population: CbfPopulation) -> np.ndarray:
        return count_matches(self.matrix, population, self.plan, self.tolerance, self._pool)

    def evaluate(self, population: CbfPopulation) -> np.ndarray:
        counts = self.count(population)
        self.n_evaluated += len(population)
        return fitness_array(counts, population.lengths(), self.params.sigma)

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
