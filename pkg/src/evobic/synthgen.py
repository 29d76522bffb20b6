"""Synthetic benchmark matrices with implanted biclusters and their ground truth.

Background cells are iid standard normal. Blocks are implanted at random row
and column index sets; consecutive blocks may share a fixed number of rows and
columns (block ``i`` overlaps block ``i + 1`` only).

Pattern definitions, for a block with ``m`` columns:

* ``column_constant``: one N(0, 1) value per column, repeated down the rows.
* ``row_constant``: one N(0, 1) value per row, repeated across the columns.
* ``shift``: a N(0, 1) base vector plus a per-row N(0, shift_sd^2) offset.
* ``scale``: the base vector times a per-row U(scale_low, scale_high) factor.
* ``shift_scale``: both of the above.
* ``trend_preserving``: each row holds sorted N(0, 1) draws laid out along one
  hidden column order shared by the whole block. Overlapping trend blocks are
  drawn with compatible orders and filled around the already-fixed cells, so
  every block keeps its pattern exactly.

Noise, when requested, is added once to every implanted cell after all blocks
are in place.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .datamodel import ExpressionMatrix, dump_truth, save_matrix

PATTERNS = ("trend_preserving", "column_constant", "row_constant", "shift", "scale", "shift_scale")
SUITES = ("patterns", "overlap", "narrow", "scaling")

PATTERN_SCENARIOS = (((150, 100), 3, (15, 15)), ((200, 150), 4, (20, 20)), ((300, 200), 5, (25, 25)))
OVERLAP_LEVELS = (0, 3, 6, 9)
NARROW_WIDTHS = (10, 20, 30)
SCALING_ROWS = (5000, 10000, 15000, 20000, 25000)
NOISE_LEVELS = (0.05, 0.1, 0.15, 0.2, 0.25)


@dataclass(frozen=True)
class ScenarioSpec:
    matrix_shape: tuple[int, int]
    biclusters: tuple[tuple[int, int], ...]
    pattern: str = "trend_preserving"
    overlap: tuple[int, int] = (0, 0)
    noise_sd: float = 0.0
    seed: int = 0
    shift_sd: float = 2.0
    scale_range: tuple[float, float] = (0.5, 3.0)

    def __post_init__(self):
        object.__setattr__(self, "matrix_shape", tuple(int(v) for v in self.matrix_shape))
        object.__setattr__(self, "biclusters", tuple((int(r), int(c)) for r, c in self.biclusters))
        object.__setattr__(self, "overlap", tuple(int(v) for v in self.overlap))
        object.__setattr__(self, "scale_range", tuple(float(v) for v in self.scale_range))
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}; expected one of {PATTERNS}")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if min(self.matrix_shape) < 1 or any(min(b) < 1 for b in self.biclusters):
            raise ValueError("shapes must be positive")
        if self.scale_range[0] <= 0 or self.scale_range[1] < self.scale_range[0]:
            raise ValueError("scale_range must be positive and ordered")


def _place(sizes: list[int], shared: int, n_total: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Index sets of the given sizes; set i+1 shares ``shared`` indices with set i and nothing else."""
    needed = sum(sizes) - shared * (len(sizes) - 1)
    if needed > n_total:
        raise ValueError("scenario infeasible")
    pool = list(rng.permutation(n_total))
    sets: list[np.ndarray] = []
    carried: list[int] = []  # indices of the previous set shared with its predecessor
    for k, size in enumerate(sizes):
        if k == 0 or shared == 0:
            picked: list[int] = []
        else:
            prev = sets[-1]
            free = [i for i in prev.tolist() if i not in carried]
            if shared >= size or len(free) < shared:
                raise ValueError("scenario infeasible")
            picked = [free[j] for j in sorted(rng.choice(len(free), shared, replace=False))]
        fresh = [pool.pop() for _ in range(size - len(picked))]
        carried = picked
        sets.append(np.array(picked + fresh, dtype=np.int64))
    return sets


def _fill_increasing(fixed: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Strictly increasing vector through the non-NaN entries of ``fixed``."""
    out = fixed.copy()
    m = len(out)
    known = np.flatnonzero(~np.isnan(out))
    if known.size == 0:
        return np.sort(rng.standard_normal(m))
    bounds = [-1, *known.tolist(), m]
    for a, b in zip(bounds[:-1], bounds[1:]):
        k = b - a - 1
        if k <= 0:
            continue
        lo = out[a] if a >= 0 else None
        hi = out[b] if b < m else None
        if lo is not None and hi is not None:
            vals = lo + (hi - lo) * np.sort(rng.uniform(0.0, 1.0, k))
        elif hi is not None:
            vals = hi - np.sort(np.abs(rng.standard_normal(k)))[::-1]
        else:
            vals = lo + np.sort(np.abs(rng.standard_normal(k)))
        out[a + 1 : b] = vals
    return out


def _trend_order(cols: np.ndarray, prev_order: np.ndarray | None, rng: np.random.Generator) -> np.ndarray:
    order = cols[rng.permutation(len(cols))]
    if prev_order is None:
        return order
    shared = np.isin(order, prev_order)
    # shared columns take the relative order they had in the previous block
    rank = {c: i for i, c in enumerate(prev_order.tolist())}
    order[shared] = sorted(order[shared].tolist(), key=rank.__getitem__)
    return order


def generate(spec: ScenarioSpec) -> tuple[ExpressionMatrix, list[tuple[list[int], list[int]]]]:
    """Build one benchmark matrix and the row/column sets of its implanted blocks."""
    rng = np.random.default_rng(spec.seed)
    n_rows, n_cols = spec.matrix_shape
    values = rng.standard_normal((n_rows, n_cols))
    if not spec.biclusters:
        return ExpressionMatrix(values), []
    ov_r, ov_c = spec.overlap
    if ov_r < 0 or ov_c < 0 or any(ov_r >= r or ov_c >= c for r, c in spec.biclusters):
        raise ValueError("scenario infeasible")
    row_sets = _place([r for r, _ in spec.biclusters], ov_r, n_rows, rng)
    col_sets = _place([c for _, c in spec.biclusters], ov_c, n_cols, rng)

    implanted = np.zeros_like(values, dtype=bool)
    prev_order = None
    prev_rows = None
    for rows, cols in zip(row_sets, col_sets):
        r, m = len(rows), len(cols)
        if spec.pattern == "trend_preserving":
            order = _trend_order(cols, prev_order, rng)
            for i in rows.tolist():
                fixed = np.full(m, np.nan)
                if prev_rows is not None and i in prev_rows:
                    mask = implanted[i, order]
                    fixed[mask] = values[i, order[mask]]
                values[i, order] = _fill_increasing(fixed, rng)
            prev_order, prev_rows = order, set(rows.tolist())
        else:
            values[np.ix_(rows, cols)] = _coherent_block(spec, r, m, rng)
        implanted[np.ix_(rows, cols)] = True

    if spec.noise_sd > 0:
        values[implanted] += rng.normal(0.0, spec.noise_sd, int(implanted.sum()))

    row_labels = tuple(f"g{i}" for i in range(n_rows))
    col_labels = tuple(f"s{j}" for j in range(n_cols))
    truth = [(sorted(rows.tolist()), sorted(cols.tolist())) for rows, cols in zip(row_sets, col_sets)]
    return ExpressionMatrix(values, row_labels, col_labels), truth


def _coherent_block(spec: ScenarioSpec, r: int, m: int, rng: np.random.Generator) -> np.ndarray:
    if spec.pattern == "column_constant":
        return np.tile(rng.standard_normal(m), (r, 1))
    if spec.pattern == "row_constant":
        return np.tile(rng.standard_normal((r, 1)), (1, m))
    base = rng.standard_normal(m)
    low, high = spec.scale_range
    if spec.pattern == "shift":
        return base + rng.normal(0.0, spec.shift_sd, (r, 1))
    if spec.pattern == "scale":
        return base * rng.uniform(low, high, (r, 1))
    factor = rng.uniform(low, high, (r, 1))
    return base * factor + rng.normal(0.0, spec.shift_sd, (r, 1))


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def derive_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1, np.uint64)[0])


def suite_specs(suite: str, master_seed: int = 0, variants: int | None = None,
                overlap_blocks: int = 3, noise_sd: float = 0.0,
                rows: tuple[int, ...] = SCALING_ROWS) -> list[tuple[str, ScenarioSpec]]:
    """Named scenario specs of a benchmark suite, in a fixed order."""
    named: list[tuple[str, dict]] = []
    if suite == "patterns":
        for pattern in PATTERNS:
            for shape, n_blocks, block in PATTERN_SCENARIOS:
                for v in range(variants or 5):
                    named.append((f"{pattern}_{shape[0]}x{shape[1]}_v{v}",
                                  dict(matrix_shape=shape, biclusters=(block,) * n_blocks, pattern=pattern)))
    elif suite == "overlap":
        for ov in OVERLAP_LEVELS:
            for v in range(variants or 5):
                named.append((f"overlap_{ov}x{ov}_v{v}",
                              dict(matrix_shape=(200, 150), biclusters=((20, 20),) * overlap_blocks,
                                   overlap=(ov, ov))))
    elif suite == "narrow":
        for width in NARROW_WIDTHS:
            for v in range(variants or 3):
                named.append((f"narrow_100x{width}_v{v}",
                              dict(matrix_shape=(1000, 100), biclusters=((100, width),))))
    elif suite == "scaling":
        for n in rows:
            for v in range(variants or 1):
                named.append((f"scaling_{n}x100_v{v}",
                              dict(matrix_shape=(n, 100), biclusters=((50, 15),) * 3)))
    else:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    return [(name, ScenarioSpec(**kw, noise_sd=noise_sd, seed=derive_seed(master_seed, i)))
            for i, (name, kw) in enumerate(named)]


def emit_suite(out_dir: str | os.PathLike, suite: str, master_seed: int = 0, **kwargs) -> list[dict]:
    """Write every dataset of ``suite`` as ``<name>.tsv`` plus ``<name>.truth.json`` and a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for name, spec in suite_specs(suite, master_seed, **kwargs):
        matrix, truth = generate(spec)
        matrix_path = out / f"{name}.tsv"
        truth_path = out / f"{name}.truth.json"
        save_matrix(matrix, matrix_path)
        dump_truth(truth, truth_path)
        manifest.append({"name": name, "matrix": matrix_path.name, "truth": truth_path.name,
                         "seed": spec.seed, "spec": asdict(spec)})
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump({"suite": suite, "master_seed": master_seed, "datasets": manifest}, fh, indent=1)
        fh.write("\n")
    return manifest
