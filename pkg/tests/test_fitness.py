import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_count, random_population
from evobic.datamodel import ExpressionMatrix, encode_population
from evobic.fitness import (
    ChunkPlan,
    FitnessEngine,
    FitnessParams,
    count_matches,
    default_sigma,
    evaluate_population,
    fitness,
    fitness_array,
    row_matches,
)


def test_row_matches_monotone_and_tie():
    m = ExpressionMatrix(np.array([[1.0, 2.0, 3.0], [2.0, 2.0, 3.0]]))
    assert row_matches(m, 0, (0, 1, 2))
    assert not row_matches(m, 1, (0, 1, 2))
    assert not row_matches(m, 0, (2, 1, 0))
    # a tie passes once a tolerance is allowed
    assert row_matches(m, 1, (0, 1, 2), tolerance=1e-9)


def test_match_fraction_is_one_over_m_factorial():
    rng = np.random.default_rng(7)
    m = ExpressionMatrix(rng.uniform(size=(10_000, 10)))
    for series in [(3, 7), (0, 5, 2), (9, 1, 4, 6)]:
        k = len(series)
        count = int(count_matches(m, encode_population([series]))[0])
        assert count == brute_force_count(m.values, series)
        p = 1 / math.factorial(k)
        se = math.sqrt(p * (1 - p) / m.n_rows)
        assert abs(count / m.n_rows - p) < 3 * se


def test_count_matches_hand_example(small_matrix):
    assert count_matches(small_matrix, encode_population([(0, 1)])).tolist() == [2]
    assert count_matches(small_matrix, encode_population([(1, 0)])).tolist() == [1]


def test_constant_rows_never_match():
    m = ExpressionMatrix(np.repeat(np.arange(20.0)[:, None], 6, axis=1))
    pop = encode_population([(0, 1), (5, 3, 2), (1, 2, 3, 4, 5)])
    assert count_matches(m, pop).tolist() == [0, 0, 0]


@pytest.mark.parametrize("n_chunks", [1, 2, 3, 7])
def test_count_matches_matches_brute_force(rng, n_chunks):
    m = ExpressionMatrix(rng.standard_normal((200, 30)))
    population = random_population(rng, 30, 50, max_len=5)
    plan = ChunkPlan.even(m.n_rows, workers=min(n_chunks, 3), n_chunks=n_chunks)
    assert len(plan.chunks) == n_chunks
    counts = count_matches(m, encode_population(population), plan)
    assert counts.tolist() == [brute_force_count(m.values, s) for s in population]


def test_uneven_chunk_bounds(rng):
    m = ExpressionMatrix(rng.standard_normal((57, 12)))
    pop = encode_population(random_population(rng, 12, 40, max_len=4))
    ref = count_matches(m, pop)
    for bounds in ([0, 1, 57], [0, 20, 21, 50, 57], list(range(0, 58, 19)) + [57]):
        bounds = sorted(set(bounds))
        assert np.array_equal(count_matches(m, pop, ChunkPlan.from_bounds(bounds, 2)), ref)


def test_chunk_plan_validation():
    plan = ChunkPlan.even(10, 3)
    assert plan.chunks == ((0, 4), (4, 8), (8, 10))
    assert ChunkPlan.even(2, 8).chunks == ((0, 1), (1, 2))
    with pytest.raises(ValueError):
        ChunkPlan(((0, 3), (4, 6)))
    with pytest.raises(ValueError):
        ChunkPlan(((1, 3),))
    with pytest.raises(ValueError):
        ChunkPlan(((0, 3), (3, 3)))
    with pytest.raises(ValueError, match="cover"):
        count_matches(ExpressionMatrix(np.zeros((5, 3))), encode_population([(0, 1)]), ChunkPlan.even(4))


# --- fitness ----------------------------------------------------------------


@pytest.mark.parametrize(
    "rows, cols, sigma, expected",
    [
        (0, 3, 10, 0.0),
        (1, 7, 10, 0.0),
        (2, 5, 10, 0.0),
        (2, 5, 2, 0.0),
        (20, 5, 10, 14.722194895832201),
        (8, 4, 10, 1.9459101490553132),
    ],
)
def test_fitness_values(rows, cols, sigma, expected):
    assert fitness(rows, cols, FitnessParams(sigma)) == pytest.approx(expected, abs=1e-9)


def test_fitness_rejects_short_series():
    with pytest.raises(ValueError):
        fitness(5, 1, FitnessParams(4))
    with pytest.raises(ValueError):
        FitnessParams(1)


@given(st.integers(2, 40), st.integers(2, 60), st.integers(2, 500))
def test_fitness_monotone_in_rows(sigma, cols, rows):
    params = FitnessParams(sigma)
    assert fitness(rows + 1, cols, params) >= fitness(rows, cols, params)
    if rows >= 3:
        assert fitness(rows, cols, params) > 0
    else:
        assert fitness(rows, cols, params) == 0


def test_fitness_array_agrees_with_scalar():
    counts = np.arange(0, 60)
    lens = (counts % 9) + 2
    arr = fitness_array(counts, lens, 11)
    for c, n, f in zip(counts, lens, arr):
        assert f == fitness(int(c), int(n), FitnessParams(11))


def test_default_sigma():
    assert default_sigma(150) == 4
    assert default_sigma(1000) == 20
    assert default_sigma(1001) == 21


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_appending_a_column_never_adds_rows(seed):
    rng = np.random.default_rng(seed)
    m = ExpressionMatrix(rng.standard_normal((60, 8)))
    base = tuple(int(c) for c in rng.choice(8, 3, replace=False))
    extra = [c for c in range(8) if c not in base]
    longer = [base + (c,) for c in extra] + [(c,) + base for c in extra]
    counts = count_matches(m, encode_population([base] + longer))
    assert np.all(counts[1:] <= counts[0])


# --- whole-population evaluation --------------------------------------------


def test_evaluate_population_zero_rows():
    m = ExpressionMatrix(np.repeat(np.arange(5.0)[:, None], 4, axis=1))
    assert evaluate_population(m, encode_population([(0, 1, 2)])).tolist() == [0.0]


def test_evaluate_equals_serial_oracle(rng):
    m = ExpressionMatrix(rng.standard_normal((120, 25)))
    params = FitnessParams(5)
    for _ in range(100):
        pop = random_population(rng, 25, int(rng.integers(1, 20)), max_len=5)
        got = evaluate_population(m, encode_population(pop), ChunkPlan.even(120, 2, 3), params)
        want = [fitness(brute_force_count(m.values, s), len(s), params) for s in pop]
        assert got.tolist() == pytest.approx(want, abs=1e-12)


def test_worker_count_does_not_change_results(rng):
    m = ExpressionMatrix(rng.standard_normal((300, 40)))
    pop = encode_population(random_population(rng, 40, 200, max_len=6))
    outputs = []
    for workers in (1, 2, 8):
        with FitnessEngine(m, threads=workers) as engine:
            outputs.append(engine.evaluate(pop))
    assert all(np.array_equal(outputs[0], o) for o in outputs[1:])


def test_engine_counts_evaluations(rng):
    m = ExpressionMatrix(rng.standard_normal((10, 5)))
    engine = FitnessEngine(m, threads=1)
    engine.evaluate(encode_population([(0, 1), (1, 2, 3)]))
    assert engine.n_evaluated == 2
    engine.close()


def test_tolerance_in_kernel_matches_row_rule(rng):
    m = ExpressionMatrix(np.round(rng.standard_normal((80, 10)), 1))
    pop = random_population(rng, 10, 30, max_len=4)
    counts = count_matches(m, encode_population(pop), tolerance=0.15)
    want = [sum(row_matches(m, r, s, 0.15) for r in range(80)) for s in pop]
    assert counts.tolist() == want
