"""Core value types, the TSV matrix format and the compressed population buffer.

A column series is a plain tuple of distinct 0-based column indices. Its order
matters: a row matches ``(c1, c2, ..., cm)`` when its values increase strictly
along those columns.

A whole population travels between the search loop and the fitness engine as a
:class:`CbfPopulation`, two flat integer arrays in the spirit of CSR storage::

    individuals  (1,4,2) (4,2) (2,3,5,1,4)
    offsets      [0, 3, 5, 10]
    col_indices  [1, 4, 2, 4, 2, 2, 3, 5, 1, 4]

``offsets`` carries a trailing sentinel so each individual's length is
``offsets[p + 1] - offsets[p]``.
"""

from __future__ import annotations

import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

ColumnSeries = tuple[int, ...]

ROW_FLAGS = ("exact", "negative", "approximate")

PathOrStream = Union[str, os.PathLike, IO]


def validate_series(series: Sequence[int], n_cols: int | None = None) -> ColumnSeries:
    """Return ``series`` as a tuple, raising ``ValueError`` if it is not a valid series."""
    s = tuple(int(c) for c in series)
    if len(s) < 2 or len(set(s)) != len(s) or min(s) < 0:
        raise ValueError(f"invalid series: {s}")
    if n_cols is not None and max(s) >= n_cols:
        raise ValueError(f"invalid series: {s} (matrix has {n_cols} columns)")
    return s


# ---------------------------------------------------------------------------
# Compressed Biclusters Format
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CbfPopulation:
    offsets: np.ndarray
    col_indices: np.ndarray

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        cols = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        if (
            offsets.ndim != 1
            or cols.ndim != 1
            or offsets.size < 2
            or offsets[0] != 0
            or offsets[-1] != cols.size
            or np.any(np.diff(offsets) < 2)
        ):
            raise ValueError("corrupt CBF")
        offsets.setflags(write=False)
        cols.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "col_indices", cols)

    def __len__(self) -> int:
        return self.offsets.size - 1

    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def series(self, p: int) -> ColumnSeries:
        lo, hi = self.offsets[p], self.offsets[p + 1]
        return tuple(self.col_indices[lo:hi].tolist())


def encode_population(individuals: Sequence[Sequence[int]]) -> CbfPopulation:
    """Pack a sequence of column series into a :class:`CbfPopulation`."""
    if len(individuals) == 0:
        raise ValueError("empty population")
    offsets = np.zeros(len(individuals) + 1, dtype=np.int64)
    flat: list[int] = []
    for p, s in enumerate(individuals):
        if len(s) < 2 or len(set(s)) != len(s):
            raise ValueError(f"invalid series at position {p}: {tuple(s)}")
        flat.extend(s)
        offsets[p + 1] = len(flat)
    return CbfPopulation(offsets, np.asarray(flat, dtype=np.int64))


def decode_population(cbf: CbfPopulation) -> list[ColumnSeries]:
    offsets = np.asarray(cbf.offsets)
    if offsets.size < 2 or offsets[0] != 0 or np.any(np.diff(offsets) <= 0):
        raise ValueError("corrupt CBF")
    cols = np.asarray(cbf.col_indices).tolist()
    bounds = offsets.tolist()
    return [tuple(cols[bounds[p] : bounds[p + 1]]) for p in range(len(bounds) - 1)]


# ---------------------------------------------------------------------------
# Matrix container and TSV I/O
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpressionMatrix:
    values: np.ndarray
    row_labels: tuple[str, ...] = ()
    col_labels: tuple[str, ...] = ()
    n_imputed: int = field(default=0, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, order="C")
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("matrix contains non-finite values")
        n_rows, n_cols = values.shape
        rows = tuple(self.row_labels) or tuple(f"r{i}" for i in range(n_rows))
        cols = tuple(self.col_labels) or tuple(f"c{j}" for j in range(n_cols))
        if len(rows) != n_rows or len(cols) != n_cols:
            raise ValueError("label counts do not match matrix shape")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_labels", rows)
        object.__setattr__(self, "col_labels", cols)

    @cached_property
    def values_t(self) -> np.ndarray:
        """Column-major copy (columns x rows) used by the fitness kernel."""
        out = np.ascontiguousarray(self.values.T)
        out.setflags(write=False)
        return out

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


def _open_text(source: PathOrStream, mode: str):
    if isinstance(source, (str, os.PathLike)):
        return open(source, mode, encoding="utf-8", newline=""), True
    if "r" in mode and isinstance(source, (io.RawIOBase, io.BufferedIOBase)):
        return io.TextIOWrapper(source, encoding="utf-8", newline=""), False
    if "r" in mode and hasattr(source, "mode") and "b" in getattr(source, "mode", ""):
        return io.TextIOWrapper(source, encoding="utf-8", newline=""), False
    return source, False


_MISSING = {"", "na", "nan"}


def load_matrix(source: PathOrStream, format: str = "tsv") -> ExpressionMatrix:
    """Read a labelled matrix.

    Blank and ``NaN``/``NA`` cells are replaced by their column mean; the number
    of replaced cells is logged and kept in ``ExpressionMatrix.n_imputed``.
    """
    if format != "tsv":
        raise ValueError(f"unsupported matrix format: {format!r}")
    fh, owned = _open_text(source, "r")
    try:
        lines = [ln.rstrip("\r\n") for ln in fh]
    finally:
        if owned:
            fh.close()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ValueError("empty matrix file")
    header = lines[0].split("\t")
    col_labels = header[1:]
    n_cols = len(col_labels)
    if n_cols < 1:
        raise ValueError("header has no column labels")

    row_labels: list[str] = []
    values = np.empty((len(lines) - 1, n_cols), dtype=np.float64)
    for i, line in enumerate(lines[1:]):
        fields = line.split("\t")
        if len(fields) != n_cols + 1:
            raise ValueError(f"inconsistent column count at line {i + 2}")
        row_labels.append(fields[0])
        for j, cell in enumerate(fields[1:]):
            cell = cell.strip()
            if cell.lower() in _MISSING:
                values[i, j] = np.nan
                continue
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise ValueError(f"parse error at ({i}, {j}): {cell!r}") from None
            if not math.isfinite(values[i, j]):
                raise ValueError(f"parse error at ({i}, {j}): {cell!r}")
    if values.shape[0] == 0:
        raise ValueError("matrix has no data rows")

    missing = np.isnan(values)
    n_missing = int(missing.sum())
    if n_missing:
        counts = (~missing).sum(axis=0)
        if np.any(counts == 0):
            j = int(np.flatnonzero(counts == 0)[0])
            raise ValueError(f"column {col_labels[j]!r} has no values")
        means = np.nansum(values, axis=0) / counts
        values[missing] = np.take(means, np.nonzero(missing)[1])
        logger.warning("imputed %d missing cells with column means", n_missing)
    return ExpressionMatrix(values, tuple(row_labels), tuple(col_labels), n_imputed=n_missing)


def save_matrix(matrix: ExpressionMatrix, dest: PathOrStream, corner: str = "id") -> None:
    # repr() gives the shortest string that parses back to the same double
    fh, owned = _open_text(dest, "w")
    try:
        fh.write("\t".join([corner, *matrix.col_labels]) + "\n")
        for label, row in zip(matrix.row_labels, matrix.values.tolist()):
            fh.write(label + "\t" + "\t".join(repr(v) for v in row) + "\n")
    finally:
        if owned:
            fh.close()


# ---------------------------------------------------------------------------
# Bicluster results and ground truth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bicluster:
    rows: tuple[int, ...]
    series: ColumnSeries
    fitness: float
    row_flags: tuple[str, ...] = ()

    def __post_init__(self):
        rows = tuple(int(r) for r in self.rows)
        flags = tuple(self.row_flags) or ("exact",) * len(rows)
        if len(flags) != len(rows):
            raise ValueError("row_flags must align with rows")
        bad = set(flags) - set(ROW_FLAGS)
        if bad:
            raise ValueError(f"unknown row flags: {sorted(bad)}")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "series", tuple(int(c) for c in self.series))
        object.__setattr__(self, "row_flags", flags)

    @property
    def columns(self) -> ColumnSeries:
        return self.series

    def to_dict(self) -> dict:
        return {
            "fitness": round(float(self.fitness), 6),
            "columns": list(self.series),
            "rows": list(self.rows),
            "row_flags": list(self.row_flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Bicluster":
        return cls(
            rows=d["rows"],
            series=d["columns"],
            fitness=float(d.get("fitness", 0.0)),
            row_flags=d.get("row_flags", ()),
        )


def dump_biclusters(biclusters: Iterable[Bicluster], dest: PathOrStream) -> None:
    """Write biclusters as JSON, sorted by descending fitness (stable)."""
    ordered = sorted(biclusters, key=lambda b: -b.fitness)
    text = json.dumps([b.to_dict() for b in ordered], indent=1) + "\n"
    fh, owned = _open_text(dest, "w")
    try:
        fh.write(text)
    finally:
        if owned:
            fh.close()


def _read_json(source: PathOrStream):
    fh, owned = _open_text(source, "r")
    try:
        return json.load(fh)
    finally:
        if owned:
            fh.close()


def load_biclusters(source: PathOrStream) -> list[Bicluster]:
    return [Bicluster.from_dict(d) for d in _read_json(source)]


def dump_truth(blocks: Iterable[tuple[Sequence[int], Sequence[int]]], dest: PathOrStream) -> None:
    payload = [{"rows": [int(r) for r in rows], "columns": [int(c) for c in cols]} for rows, cols in blocks]
    fh, owned = _open_text(dest, "w")
    try:
        fh.write(json.dumps(payload) + "\n")
    finally:
        if owned:
            fh.close()


def load_truth(source: PathOrStream) -> list[tuple[list[int], list[int]]]:
    """Read ``[{"rows": [...], "columns": [...]}, ...]``; bicluster output files are accepted too."""
    return [(list(d["rows"]), list(d["columns"])) for d in _read_json(source)]
