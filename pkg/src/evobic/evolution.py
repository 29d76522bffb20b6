"""Generational search over column series.

Each generation clones the best entries of the top-rank list (elitism), then
fills the population with children produced by tournament selection and one of
five operators. Tournament scores are divided by ``penalty_base ** theta``,
where ``theta`` is the mean usage count, within the generation being built, of
the candidate's columns; this crowding term favours under-represented columns.
Every series ever generated goes into a tabu list and is never evaluated again.
A generation that produces more duplicates than the population size ends the
search.

The loop is sequential and owns a single seeded ``random.Random`` stream; only
fitness evaluation is parallel.
"""

from __future__ import annotations

import bisect
import dataclasses
import logging
import math
import random
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .datamodel import ColumnSeries, CbfPopulation, ExpressionMatrix, encode_population
from .fitness import FitnessEngine, FitnessParams, default_sigma

logger = logging.getLogger(__name__)

OPERATORS = ("insertion", "deletion", "swap", "substitution", "crossover")


@dataclass
class EvolutionConfig:
    population_size: int = 400
    max_iterations: int = 5000
    elite_fraction: float = 0.25
    tournament_size: int = 4
    p_insertion: float = 0.30
    p_deletion: float = 0.15
    p_swap: float = 0.15
    p_substitution: float = 0.15
    p_crossover: float = 0.25
    overlap_threshold: float = 0.75
    top_rank_capacity: int = 100
    penalty_base: float = 1.2
    rng_seed: int = 0
    # fitness-side settings, kept here so one config file drives a run
    sigma: int | None = None
    tolerance: float = 0.0

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not 0.0 < self.elite_fraction <= 1.0:
            raise ValueError("elite_fraction must lie in (0, 1]")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be positive")
        probs = self.probabilities
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"operator probabilities must be non-negative and sum to 1, got {probs}")
        if not 0.0 < self.overlap_threshold <= 1.0:
            raise ValueError("overlap_threshold must lie in (0, 1]")
        if self.top_rank_capacity < 1:
            raise ValueError("top_rank_capacity must be positive")
        if self.penalty_base <= 1.0:
            raise ValueError("penalty_base must be > 1")
        if self.sigma is not None and self.sigma < 2:
            raise ValueError("sigma must be >= 2")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")

    @property
    def probabilities(self) -> tuple[float, ...]:
        return (self.p_insertion, self.p_deletion, self.p_swap, self.p_substitution, self.p_crossover)

    @classmethod
    def from_dict(cls, d: dict) -> "EvolutionConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# Search state
# ---------------------------------------------------------------------------


class ColumnPenaltyTable:
    """Per-column usage counters for the generation currently being built."""

    def __init__(self, n_cols: int):
        self.usage = [0] * n_cols

    def reset(self) -> None:
        self.usage = [0] * len(self.usage)

    def admit(self, series: Sequence[int]) -> None:
        usage = self.usage
        for c in series:
            usage[c] += 1

    def theta(self, series: Sequence[int]) -> float:
        usage = self.usage
        return sum([usage[c] for c in series]) / len(series)


class TabuList:
    def __init__(self, keys=()):
        self._keys: set[ColumnSeries] = set(keys)
        self.hit_counter = 0

    def __contains__(self, series) -> bool:
        return series in self._keys

    def __len__(self) -> int:
        return len(self._keys)

    def add(self, series: ColumnSeries) -> None:
        self._keys.add(series)


def column_overlap(a: Sequence[int], b: Sequence[int]) -> float:
    """Shared columns divided by the size of the smaller series."""
    return len(set(a).intersection(b)) / min(len(a), len(b))


class TopRankList:
    """Best non-redundant series found so far, sorted by descending fitness.

    Ties keep insertion order. No two entries share more than
    ``overlap_threshold`` of their columns (see :func:`column_overlap`).
    """

    def __init__(self, capacity: int = 100, overlap_threshold: float = 0.75):
        self.capacity = capacity
        self.overlap_threshold = overlap_threshold
        self._series: list[ColumnSeries] = []
        self._neg_fitness: list[float] = []
        self._colsets: list[frozenset] = []

    def __len__(self) -> int:
        return len(self._series)

    def __iter__(self) -> Iterator[tuple[ColumnSeries, float]]:
        return iter(self.entries)

    @property
    def entries(self) -> list[tuple[ColumnSeries, float]]:
        return [(s, -nf) for s, nf in zip(self._series, self._neg_fitness)]

    @property
    def series(self) -> list[ColumnSeries]:
        return list(self._series)

    @property
    def fitnesses(self) -> list[float]:
        return [-nf for nf in self._neg_fitness]

    def _conflicts(self, cols: frozenset, size: int, other: frozenset) -> bool:
        return len(cols & other) > self.overlap_threshold * min(size, len(other))

    def offer(self, series: ColumnSeries, fit: float) -> bool:
        """Try to admit one series; returns whether it was admitted."""
        if fit <= 0.0 or series in self._series:
            return False
        full = len(self._series) >= self.capacity
        if full and fit <= -self._neg_fitness[-1]:
            return False
        # entries with equal fitness were inserted earlier and rank above
        pos = bisect.bisect_right(self._neg_fitness, -fit)
        cols = frozenset(series)
        size = len(series)
        thr = self.overlap_threshold
        for other in self._colsets[:pos]:
            if len(cols & other) > thr * min(size, len(other)):
                return False
        keep = [i for i in range(pos, len(self._series))
                if not len(cols & self._colsets[i]) > thr * min(size, len(self._colsets[i]))]
        if len(keep) != len(self._series) - pos:
            self._series[pos:] = [self._series[i] for i in keep]
            self._neg_fitness[pos:] = [self._neg_fitness[i] for i in keep]
            self._colsets[pos:] = [self._colsets[i] for i in keep]
        self._series.insert(pos, series)
        self._neg_fitness.insert(pos, -fit)
        self._colsets.insert(pos, cols)
        if len(self._series) > self.capacity:
            del self._series[self.capacity:], self._neg_fitness[self.capacity:], self._colsets[self.capacity:]
        return True

    def update(self, population: Sequence[ColumnSeries], fitnesses: Sequence[float]) -> "TopRankList":
        fits = np.asarray(fitnesses, dtype=np.float64)
        # stable: equal fitness keeps population order
        for i in np.argsort(-fits, kind="stable").tolist():
            f = float(fits[i])
            if f <= 0.0:
                break
            if len(self._series) >= self.capacity and f <= -self._neg_fitness[-1]:
                break
            self.offer(tuple(population[i]), f)
        return self

    def check_invariants(self) -> None:
        """Raise ``AssertionError`` if sortedness, overlap or capacity is violated."""
        assert len(self._series) <= self.capacity, "top-rank list over capacity"
        assert all(a <= b for a, b in zip(self._neg_fitness, self._neg_fitness[1:])), "top-rank list not sorted"
        for i in range(len(self._series)):
            for j in range(i + 1, len(self._series)):
                ov = column_overlap(self._series[i], self._series[j])
                assert ov <= self.overlap_threshold, f"entries {i} and {j} overlap by {ov:.3f}"


def update_top_rank(top_rank: TopRankList, population, fitnesses, cfg: EvolutionConfig | None = None) -> TopRankList:
    return top_rank.update(population, fitnesses)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------
# Each operator returns its input object unchanged when it cannot apply.


def _unused_column(s: Sequence[int], n_cols: int, rng: random.Random) -> int:
    if 2 * len(s) < n_cols:
        rand = rng.random
        while True:
            c = int(rand() * n_cols)
            if c not in s:
                return c
    used = set(s)
    return rng.choice([c for c in range(n_cols) if c not in used])


def mutate_insertion(s: ColumnSeries, n_cols: int, rng: random.Random,
                     column: int | None = None, position: int | None = None) -> ColumnSeries:
    if len(s) >= n_cols:
        return s
    if column is None:
        column = _unused_column(s, n_cols, rng)
    if position is None:
        position = int(rng.random() * (len(s) + 1))
    return s[:position] + (column,) + s[position:]


def mutate_deletion(s: ColumnSeries, rng: random.Random, index: int | None = None) -> ColumnSeries:
    if len(s) <= 2:
        return s
    if index is None:
        index = int(rng.random() * len(s))
    return s[:index] + s[index + 1:]


def mutate_swap(s: ColumnSeries, rng: random.Random, i: int | None = None, j: int | None = None) -> ColumnSeries:
    if i is None or j is None:
        i, j = rng.sample(range(len(s)), 2)
    out = list(s)
    out[i], out[j] = out[j], out[i]
    return tuple(out)


def mutate_substitution(s: ColumnSeries, n_cols: int, rng: random.Random,
                        position: int | None = None, column: int | None = None) -> ColumnSeries:
    if len(s) >= n_cols:
        return s
    if position is None:
        position = int(rng.random() * len(s))
    if column is None:
        column = _unused_column(s, n_cols, rng)
    return s[:position] + (column,) + s[position + 1:]


def crossover(a: ColumnSeries, b: ColumnSeries, rng: random.Random, cut: int | None = None,
              fitness_a: float = 0.0, fitness_b: float = 0.0) -> ColumnSeries:
    """Prefix of ``a`` followed by the columns of ``b`` not already in it."""
    if cut is None:
        cut = 1 + int(rng.random() * len(a))
    head = a[:cut]
    seen = set(head)
    child = head + tuple(c for c in b if c not in seen)
    if len(child) < 2:
        return a if fitness_a >= fitness_b else b
    return child


# ---------------------------------------------------------------------------
# Population construction
# ---------------------------------------------------------------------------


def _n_possible_series(n_cols: int, max_len: int = 4) -> int:
    return sum(math.perm(n_cols, k) for k in range(2, min(max_len, n_cols) + 1))


def init_population(n_cols: int, cfg: EvolutionConfig, rng: random.Random,
                    tabu: TabuList | None = None) -> list[ColumnSeries]:
    """Distinct random series of length 2-4, registered in ``tabu`` when given."""
    if n_cols < 3:
        raise ValueError("matrix too narrow")
    if n_cols < 20:
        warnings.warn(f"only {n_cols} columns; an exhaustive search is preferable below 20", stacklevel=2)
    target = cfg.population_size
    possible = _n_possible_series(n_cols)
    if target > possible:
        warnings.warn(f"population_size {target} exceeds the {possible} possible initial series", stacklevel=2)
        target = possible
    tabu = tabu if tabu is not None else TabuList()
    population: list[ColumnSeries] = []
    while len(population) < target:
        s = tuple(rng.sample(range(n_cols), min(rng.randint(2, 4), n_cols)))
        if s not in tabu:
            tabu.add(s)
            population.append(s)
    return population


def tournament_select(population: Sequence[ColumnSeries], fitnesses: Sequence[float],
                      penalties: ColumnPenaltyTable, cfg: EvolutionConfig, rng: random.Random) -> int:
    """Index of the best of ``tournament_size`` uniform draws, scored by crowding-penalised fitness."""
    n = len(population)
    base = cfg.penalty_base
    getusage = penalties.usage.__getitem__
    rand = rng.random
    best_idx = -1
    best_score = -math.inf
    for _ in range(cfg.tournament_size):
        i = int(rand() * n)
        fit = fitnesses[i]
        # the divisor is >= 1, so a raw fitness at or below the best score cannot win
        if fit <= best_score:
            continue
        s = population[i]
        score = fit / base ** (sum(map(getusage, s)) / len(s))
        if score > best_score:
            best_idx, best_score = i, score
    return best_idx


@dataclass
class Generation:
    series: list[ColumnSeries]
    n_elite: int
    elite_fitness: list[float]
    terminate: bool
    tabu_hits: int = 0

    @property
    def children(self) -> list[ColumnSeries]:
        return self.series[self.n_elite:]

    @property
    def population(self) -> CbfPopulation:
        return encode_population(self.series)


def build_generation(prev_population: Sequence[ColumnSeries], prev_fitness: Sequence[float],
                     top_rank: TopRankList, tabu: TabuList, penalties: ColumnPenaltyTable,
                     cfg: EvolutionConfig, rng: random.Random, n_cols: int) -> Generation:
    """Elite clones followed by novel children, until the population is full or the tabu list saturates."""
    penalties.reset()
    tabu.hit_counter = 0
    size = cfg.population_size
    n_elite = min(math.ceil(cfg.elite_fraction * len(top_rank)), size)
    elites = top_rank.entries[:n_elite]
    population = [s for s, _ in elites]
    for s in population:
        penalties.admit(s)

    cum = np.cumsum(cfg.probabilities).tolist()
    cum[-1] = 1.0
    prev_fitness = list(prev_fitness)
    terminate = False
    while len(population) < size:
        i = tournament_select(prev_population, prev_fitness, penalties, cfg, rng)
        parent = prev_population[i]
        u = rng.random()
        if u < cum[0]:
            child = mutate_insertion(parent, n_cols, rng)
        elif u < cum[1]:
            child = mutate_deletion(parent, rng)
        elif u < cum[2]:
            child = mutate_swap(parent, rng)
        elif u < cum[3]:
            child = mutate_substitution(parent, n_cols, rng)
        else:
            j = tournament_select(prev_population, prev_fitness, penalties, cfg, rng)
            child = crossover(parent, prev_population[j], rng,
                              fitness_a=prev_fitness[i], fitness_b=prev_fitness[j])
        if child in tabu:
            tabu.hit_counter += 1
            if tabu.hit_counter > size:
                terminate = True
                break
            continue
        tabu.add(child)
        population.append(child)
        penalties.admit(child)
    return Generation(population, n_elite, [f for _, f in elites], terminate, tabu.hit_counter)


# ---------------------------------------------------------------------------
# Main loop
# ---------------------------------------------------------------------------


@dataclass
class SearchResult:
    top_rank: TopRankList
    n_generations: int
    stopped_by_tabu: bool
    best_fitness: list[float] = field(default_factory=list)
    n_evaluated: int = 0


def run(matrix: ExpressionMatrix, cfg: EvolutionConfig | None = None, threads: int | None = 0,
        callback: Callable[[int, TopRankList], None] | None = None,
        engine: FitnessEngine | None = None) -> SearchResult:
    """Search ``matrix`` for order-preserving column series.

    ``callback(generation, top_rank)`` is called after initialisation
    (generation 0) and after every completed generation.
    """
    cfg = cfg or EvolutionConfig()
    rng = random.Random(cfg.rng_seed)
    n_cols = matrix.n_cols
    tabu = TabuList()
    penalties = ColumnPenaltyTable(n_cols)
    top_rank = TopRankList(cfg.top_rank_capacity, cfg.overlap_threshold)

    own_engine = engine is None
    if own_engine:
        params = FitnessParams(cfg.sigma or default_sigma(matrix.n_rows))
        engine = FitnessEngine(matrix, params, threads=threads, tolerance=cfg.tolerance)
    try:
        population = init_population(n_cols, cfg, rng, tabu)
        fitness = engine.evaluate(encode_population(population)).tolist()
        top_rank.update(population, fitness)
        history = [top_rank.fitnesses[0] if len(top_rank) else 0.0]
        if callback:
            callback(0, top_rank)

        stopped = False
        generation = 0
        for generation in range(1, cfg.max_iterations + 1):
            gen = build_generation(population, fitness, top_rank, tabu, penalties, cfg, rng, n_cols)
            if gen.terminate:
                logger.info("generation %d: %d tabu hits, stopping", generation, gen.tabu_hits)
                stopped = True
                generation -= 1
                break
            children = gen.children
            child_fitness = engine.evaluate(encode_population(children)).tolist() if children else []
            top_rank.update(children, child_fitness)
            population = gen.series
            fitness = gen.elite_fitness + child_fitness
            history.append(top_rank.fitnesses[0] if len(top_rank) else 0.0)
            if callback:
                callback(generation, top_rank)
        return SearchResult(top_rank, generation, stopped, history, engine.n_evaluated)
    finally:
        if own_engine:
            engine.close()
