import numpy as np
import pytest

from evobic.datamodel import ExpressionMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_matrix():
    return ExpressionMatrix(np.array([[1.0, 2.0], [2.0, 1.0], [3.0, 4.0]]))


def random_population(rng, n_cols, size, max_len=8):
    """Distinct-column series of random length, drawn with numpy."""
    out = []
    for _ in range(size):
        k = int(rng.integers(2, min(max_len, n_cols) + 1))
        out.append(tuple(int(c) for c in rng.choice(n_cols, k, replace=False)))
    return out


def brute_force_count(values, series):
    count = 0
    for row in values:
        if all(row[a] < row[b] for a, b in zip(series, series[1:])):
            count += 1
    return count


# Acceptance outcomes, filled by tests/test_acceptance.py: (criterion, ok, detail).
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    grouped: dict[str, list[tuple[bool, str]]] = {}
    for criterion, ok, detail in ACCEPTANCE_RESULTS:
        grouped.setdefault(criterion, []).append((ok, detail))
    terminalreporter.section("acceptance criteria")
    for criterion, entries in grouped.items():
        ok = all(flag for flag, _ in entries)
        detail = "; ".join(d for _, d in entries) if len(entries) == 1 else f"{sum(f for f, _ in entries)}/{len(entries)} checks pass"
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}")
