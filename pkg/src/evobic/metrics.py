"""Recovery and relevance of found biclusters against ground truth.

Biclusters are compared as sets of matrix cells. Recovery averages, over the
expected biclusters, the best Jaccard index reached by any found bicluster;
relevance does the same from the found side. Both are normalised by the size
of the set being averaged over, so they lie in [0, 1].
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

Block = tuple[Sequence[int], Sequence[int]]


def _as_block(b) -> tuple[frozenset, frozenset]:
    if hasattr(b, "rows") and hasattr(b, "columns"):
        return frozenset(b.rows), frozenset(b.columns)
    rows, cols = b
    return frozenset(int(r) for r in rows), frozenset(int(c) for c in cols)


def jaccard(a, b) -> float:
    """Cell-level Jaccard index of two biclusters given as ``(rows, columns)``."""
    ra, ca = _as_block(a)
    rb, cb = _as_block(b)
    size_a, size_b = len(ra) * len(ca), len(rb) * len(cb)
    if size_a == 0 and size_b == 0:
        raise ValueError("undefined Jaccard")
    inter = len(ra & rb) * len(ca & cb)
    return inter / (size_a + size_b - inter)


def jaccard_matrix(expected: Sequence, found: Sequence) -> np.ndarray:
    """``out[i, j] = jaccard(expected[i], found[j])``."""
    exp = [_as_block(b) for b in expected]
    fnd = [_as_block(b) for b in found]
    out = np.zeros((len(exp), len(fnd)))
    for i, e in enumerate(exp):
        for j, f in enumerate(fnd):
            out[i, j] = jaccard(e, f)
    return out


def recovery(expected: Sequence, found: Sequence) -> float:
    if len(expected) == 0:
        raise ValueError("expected biclusters must be non-empty")
    if len(found) == 0:
        return 0.0
    return float(jaccard_matrix(expected, found).max(axis=1).mean())


def relevance(expected: Sequence, found: Sequence) -> float:
    if len(expected) == 0:
        raise ValueError("expected biclusters must be non-empty")
    if len(found) == 0:
        logger.warning("no biclusters found; relevance is 0")
        return 0.0
    return float(jaccard_matrix(expected, found).max(axis=0).mean())


def score(expected: Sequence, found: Sequence) -> dict:
    """Recovery, relevance and the per-bicluster best matches behind them."""
    if len(expected) == 0:
        raise ValueError("expected biclusters must be non-empty")
    if len(found) == 0:
        logger.warning("no biclusters found; recovery and relevance are 0")
        return {"recovery": 0.0, "relevance": 0.0,
                "per_expected": [0.0] * len(expected), "per_found": []}
    jm = jaccard_matrix(expected, found)
    per_expected = jm.max(axis=1)
    per_found = jm.max(axis=0)
    return {
        "recovery": float(per_expected.mean()),
        "relevance": float(per_found.mean()),
        "per_expected": per_expected.tolist(),
        "per_found": per_found.tolist(),
    }
