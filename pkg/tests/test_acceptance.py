"""End-to-end acceptance suite.

Every criterion prints one ``PASS``/``FAIL`` line with its measured value and
threshold. The full run takes roughly an hour on one CPU core; run it alone
with ``pytest tests/test_acceptance.py -v``.
"""

import math
import random
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_RESULTS, brute_force_count
from evobic.cli import main
from evobic.datamodel import ExpressionMatrix, decode_population, encode_population, save_matrix
from evobic.evolution import (
    EvolutionConfig,
    crossover,
    mutate_deletion,
    mutate_insertion,
    mutate_substitution,
    mutate_swap,
    run,
)
from evobic.expansion import resolve
from evobic.fitness import ChunkPlan, FitnessParams, count_matches, fitness
from evobic.metrics import recovery, relevance
from evobic.synthgen import PATTERNS, ScenarioSpec, generate, suite_specs

pytestmark = pytest.mark.slow

MASTER_SEED = 2018
PROPERTY = "property suites"

# Settings shared by the pattern, narrow and overlap criteria. A tolerance just
# above zero lets exact ties (row-constant blocks) count as non-decreasing.
BASE = dict(overlap_threshold=0.5, tolerance=1e-9, rng_seed=1)

# Settings for noisy data, tuned on seeds disjoint from the ones scored here.
# Comparisons tolerate a step back of about one to three noise sd; at the
# higher level, short row sets are penalised harder and a larger population
# keeps the weaker blocks in play.
NOISE_SETTINGS = {
    0.1: dict(tolerance=0.3, approx_violations=1),
    0.25: dict(tolerance=0.35, sigma=10, population_size=1000, approx_violations=1),
}


def report(capsys, name, ok, detail, criterion=None):
    """Print one PASS/FAIL line now and record it for the end-of-session summary."""
    ACCEPTANCE_RESULTS.append((criterion or name, ok, detail))
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")


def search_and_score(matrix, truth, max_iterations, approx_violations=1, **overrides):
    """Run the search and score the best ``len(truth)`` biclusters."""
    cfg = EvolutionConfig(max_iterations=max_iterations, **{**BASE, **overrides})
    result = run(matrix, cfg, threads=1)
    params = FitnessParams(cfg.sigma) if cfg.sigma else None
    found = resolve(matrix, result.top_rank.series[: len(truth)], params, tolerance=cfg.tolerance,
                    approx_violations=approx_violations)
    blocks = [(b.rows, b.series) for b in found]
    return recovery(truth, blocks), relevance(truth, blocks)


def mean_scores(pairs):
    rec, rel = zip(*pairs)
    return float(np.mean(rec)), float(np.mean(rel))


# ---------------------------------------------------------------------------
# Recovery criteria
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_pattern_specs():
    """The 30 datasets of the 150 x 100 scenario, keyed by pattern."""
    out = {}
    for name, spec in suite_specs("patterns", MASTER_SEED):
        if spec.matrix_shape == (150, 100):
            out.setdefault(spec.pattern, []).append(spec)
    return out


@pytest.fixture(scope="module")
def trend_scores(small_pattern_specs):
    return [search_and_score(*generate(spec), max_iterations=20_000)
            for spec in small_pattern_specs["trend_preserving"]]


def test_trend_preserving_recovery(trend_scores, capsys):
    rec, rel = mean_scores(trend_scores)
    ok = rec >= 0.95 and rel >= 0.90
    report(capsys, "trend-preserving recovery (5 x 150x100, 20k iterations)", ok,
           f"recovery {rec:.3f} (>= 0.95), relevance {rel:.3f} (>= 0.90)")
    assert ok


def test_six_pattern_suite(small_pattern_specs, trend_scores, capsys):
    scores = {"trend_preserving": trend_scores}
    for pattern in PATTERNS:
        if pattern != "trend_preserving":
            scores[pattern] = [search_and_score(*generate(s), max_iterations=5000)
                               for s in small_pattern_specs[pattern]]
    rec, rel = mean_scores([p for pairs in scores.values() for p in pairs])
    per = ", ".join(f"{k} {np.mean([r for r, _ in v]):.2f}/{np.mean([r for _, r in v]):.2f}"
                    for k, v in scores.items())
    ok = rec >= 0.80 and rel >= 0.80
    report(capsys, "six-pattern suite (30 x 150x100)", ok,
           f"recovery {rec:.3f}, relevance {rel:.3f} (>= 0.80 each); {per}")
    assert ok


def test_narrow_biclusters(capsys):
    scores = [search_and_score(*generate(spec), max_iterations=5000)
              for _, spec in suite_specs("narrow", MASTER_SEED)]
    rec, _ = mean_scores(scores)
    ok = rec >= 0.85
    report(capsys, "narrow biclusters (9 x 1000x100)", ok, f"recovery {rec:.3f} (>= 0.85)")
    assert ok


def test_overlap_degradation(capsys):
    by_level = {}
    for name, spec in suite_specs("overlap", MASTER_SEED):
        by_level.setdefault(spec.overlap[0], []).append(search_and_score(*generate(spec), max_iterations=5000))
    rec0, rel0 = mean_scores(by_level[0])
    rec9, rel9 = mean_scores(by_level[9])
    drop = max(rec0 - rec9, rel0 - rel9)
    ok = rec9 >= 0.75 and rel9 >= 0.75 and drop <= 0.20
    levels = ", ".join(f"{k}x{k} {mean_scores(v)[0]:.2f}/{mean_scores(v)[1]:.2f}" for k, v in by_level.items())
    report(capsys, "overlap degradation (20 x 200x150)", ok,
           f"9x9 recovery {rec9:.3f}, relevance {rel9:.3f} (>= 0.75); drop {drop:.3f} (<= 0.20); {levels}")
    assert ok


@pytest.mark.parametrize("noise_sd, threshold", [(0.1, 0.80), (0.25, 0.60)])
def test_noise_tolerance(noise_sd, threshold, capsys):
    settings = NOISE_SETTINGS[noise_sd]
    specs = [s for _, s in suite_specs("patterns", MASTER_SEED + 1, noise_sd=noise_sd)
             if s.pattern == "trend_preserving" and s.matrix_shape == (150, 100)]
    scores = [search_and_score(*generate(s), max_iterations=20_000, **settings) for s in specs]
    rec, _ = mean_scores(scores)
    ok = rec >= threshold
    report(capsys, f"noise tolerance sd {noise_sd} (5 x 150x100, 20k iterations)", ok,
           f"recovery {rec:.3f} (>= {threshold:.2f}); per dataset {[round(r, 3) for r, _ in scores]}",
           criterion="noise tolerance")
    assert ok


# ---------------------------------------------------------------------------
# Property suites
# ---------------------------------------------------------------------------


def test_property_cbf_round_trip(capsys):
    rng = np.random.default_rng(1)
    failures = 0
    for _ in range(10_000):
        pop = []
        for _ in range(int(rng.integers(1, 20))):
            k = int(rng.integers(2, 12))
            pop.append(tuple(int(c) for c in rng.choice(200, k, replace=False)))
        cbf = encode_population(pop)
        again = encode_population(decode_population(cbf))
        if decode_population(cbf) != pop or not np.array_equal(again.offsets, cbf.offsets) \
                or not np.array_equal(again.col_indices, cbf.col_indices):
            failures += 1
    report(capsys, "property: CBF round trip (10^4 populations)", failures == 0, f"{failures} failures",
           criterion=PROPERTY)
    assert failures == 0


def test_property_count_matches_vs_brute_force(capsys):
    rng = np.random.default_rng(2)
    failures = 0
    for case in range(500):
        n_rows, n_cols = int(rng.integers(1, 120)), int(rng.integers(2, 25))
        m = ExpressionMatrix(np.round(rng.standard_normal((n_rows, n_cols)), 1))
        pop = []
        for _ in range(int(rng.integers(1, 15))):
            k = int(rng.integers(2, min(6, n_cols) + 1))
            pop.append(tuple(int(c) for c in rng.choice(n_cols, k, replace=False)))
        want = [brute_force_count(m.values, s) for s in pop]
        cbf = encode_population(pop)
        for n_chunks in (1, 2, 3, 7):
            plan = ChunkPlan.even(n_rows, workers=2, n_chunks=min(n_chunks, n_rows))
            if count_matches(m, cbf, plan).tolist() != want:
                failures += 1
    report(capsys, "property: count_matches vs brute force (500 cases x 4 chunkings)", failures == 0,
           f"{failures} failures",
           criterion=PROPERTY)
    assert failures == 0


def test_property_fitness_arithmetic(capsys):
    cases = [(0, 3, 10), (1, 7, 10), (2, 5, 10), (20, 5, 10), (8, 4, 10), (3, 2, 4), (100, 9, 20), (5, 30, 30)]
    worst = 0.0
    for rows, cols, sigma in cases:
        direct = 2.0 ** min(rows - sigma, 0) * cols * math.log(rows - 1) if rows > 1 else 0.0
        worst = max(worst, abs(fitness(rows, cols, FitnessParams(sigma)) - direct))
    ok = worst <= 1e-9
    report(capsys, "property: fitness direct arithmetic", ok, f"max abs error {worst:.2e} (<= 1e-9)",
           criterion=PROPERTY)
    assert ok


def _valid(s, n_cols):
    return len(s) >= 2 and len(set(s)) == len(s) and all(0 <= c < n_cols for c in s)


def test_property_operators(capsys):
    rng = random.Random(3)
    failures = {"insertion": 0, "deletion": 0, "swap": 0, "substitution": 0, "crossover": 0}
    n_cols = 30
    for _ in range(10_000):
        k = rng.randint(2, n_cols)
        s = tuple(rng.sample(range(n_cols), k))
        other = tuple(rng.sample(range(n_cols), rng.randint(2, n_cols)))
        c = mutate_insertion(s, n_cols, rng)
        if not _valid(c, n_cols) or (k < n_cols and (len(c) != k + 1 or not set(s) < set(c))):
            failures["insertion"] += 1
        c = mutate_deletion(s, rng)
        if not _valid(c, n_cols) or (k > 2 and (len(c) != k - 1 or not set(c) < set(s))):
            failures["deletion"] += 1
        c = mutate_swap(s, rng)
        if sorted(c) != sorted(s) or sum(a != b for a, b in zip(s, c)) != 2:
            failures["swap"] += 1
        c = mutate_substitution(s, n_cols, rng)
        if not _valid(c, n_cols) or (k < n_cols and sum(a != b for a, b in zip(s, c)) != 1):
            failures["substitution"] += 1
        c = crossover(s, other, rng)
        if not _valid(c, n_cols) or not set(c) <= set(s) | set(other):
            failures["crossover"] += 1
    total = sum(failures.values())
    report(capsys, "property: operator validity (10^4 cases each)", total == 0, str(failures),
           criterion=PROPERTY)
    assert total == 0


def test_property_top_rank_invariants(capsys):
    matrix, _ = generate(ScenarioSpec((150, 100), ((15, 15),) * 3, seed=MASTER_SEED))
    violations = []
    best = []

    def check(generation, top_rank):
        try:
            top_rank.check_invariants()
        except AssertionError as exc:
            violations.append((generation, str(exc)))
        best.append(top_rank.fitnesses[0] if len(top_rank) else 0.0)

    result = run(matrix, EvolutionConfig(max_iterations=200, **BASE), threads=1, callback=check)
    monotone = all(b >= a for a, b in zip(best, best[1:]))
    ok = not violations and monotone and result.n_generations == 200
    report(capsys, "property: top-rank invariants every generation (200 generations)", ok,
           f"{len(violations)} violations, best fitness monotone: {monotone}",
           criterion=PROPERTY)
    assert ok


def test_property_metrics_vs_oracle(capsys):
    rng = np.random.default_rng(4)

    def block():
        return (rng.choice(15, int(rng.integers(1, 15)), replace=False).tolist(),
                rng.choice(15, int(rng.integers(1, 15)), replace=False).tolist())

    def cells(b):
        return {(r, c) for r in b[0] for c in b[1]}

    def jac(a, b):
        a, b = cells(a), cells(b)
        return len(a & b) / len(a | b)

    failures = 0
    for _ in range(1000):
        expected = [block() for _ in range(int(rng.integers(1, 5)))]
        found = [block() for _ in range(int(rng.integers(1, 5)))]
        rec = sum(max(jac(e, f) for f in found) for e in expected) / len(expected)
        rel = sum(max(jac(f, e) for e in expected) for f in found) / len(found)
        if abs(recovery(expected, found) - rec) > 1e-12 or abs(relevance(expected, found) - rel) > 1e-12:
            failures += 1
    report(capsys, "property: metrics vs all-pairs oracle (10^3 cases)", failures == 0, f"{failures} failures",
           criterion=PROPERTY)
    assert failures == 0


def test_property_byte_determinism(tmp_path, capsys):
    matrix, _ = generate(ScenarioSpec((150, 100), ((15, 15),) * 3, seed=MASTER_SEED))
    save_matrix(matrix, tmp_path / "m.tsv")
    outputs = {}
    for workers in (1, 2, 8):
        path = tmp_path / f"out{workers}.json"
        main(["run", str(tmp_path / "m.tsv"), "-o", str(path), "--iterations", "100", "--seed", "11",
              "--threads", str(workers)])
        outputs[workers] = path.read_bytes()
    ok = outputs[1] == outputs[2] == outputs[8] and len(outputs[1]) > 0
    report(capsys, "property: byte-identical output at 1, 2 and 8 workers", ok,
           f"{len(outputs[1])} bytes per output",
           criterion=PROPERTY)
    assert ok


# ---------------------------------------------------------------------------
# Scaling harness
# ---------------------------------------------------------------------------


def test_scaling_harness(tmp_path, capsys):
    t0 = time.perf_counter()
    out = tmp_path / "bench.csv"
    code = main(["bench", "--rows", "5000,25000", "--cols", "100", "--iterations", "200", "--repeats", "3",
                 "-o", str(out)])
    elapsed = time.perf_counter() - t0
    lines = out.read_text().splitlines()
    rows = [line.split(",") for line in lines[1:]]
    means = {int(r[0]): float(r[1]) for r in rows}
    ratio = means[25000] / means[5000]
    ok = code == 0 and lines[0] == "rows,mean_seconds,sd_seconds" and elapsed <= 1800 and ratio <= 2 * 5
    report(capsys, "scaling harness (rows 5000 and 25000, 200 iterations)", ok,
           f"time ratio {ratio:.2f} for 5x rows (<= 10); total {elapsed:.0f} s (<= 1800)")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
