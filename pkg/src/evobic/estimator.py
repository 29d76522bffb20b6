"""scikit-learn estimator wrapper around the evolutionary search."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, BiclusterMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .datamodel import Bicluster, ExpressionMatrix
from .evolution import EvolutionConfig, run
from .expansion import resolve
from .fitness import FitnessParams, default_sigma


class EvolutionaryBiclustering(BiclusterMixin, BaseEstimator):
    """Find order-preserving biclusters with a genetic search over column series.

    A bicluster is a column series ``(c1, ..., cm)`` together with the rows whose
    values increase along it. The search keeps a top-rank list of the fittest
    series whose column sets do not overlap by more than ``overlap_threshold``;
    the best ``n_biclusters`` of them are resolved into rows and optionally
    expanded with reversed-trend and near-trend rows.

    Parameters
    ----------
    n_biclusters : int, default=100
        Maximum number of biclusters reported.
    max_iterations : int, default=5000
        Generations after initialisation. The search also stops early when a
        generation hits the tabu list more than ``population_size`` times.
    population_size, elite_fraction, tournament_size, penalty_base, top_rank_capacity
        Search settings, see :class:`evobic.evolution.EvolutionConfig`.
    p_insertion, p_deletion, p_swap, p_substitution, p_crossover : float
        Operator probabilities; must sum to 1.
    overlap_threshold : float, default=0.75
        Largest column overlap (shared columns over the smaller series) allowed
        between two reported biclusters.
    sigma : int or None, default=None
        Rows below which fitness is penalised exponentially. ``None`` uses
        ``max(ceil(0.02 * n_rows), 4)``.
    tolerance : float, default=0.0
        A step counts as increasing when ``next > previous - tolerance``.
        ``0`` is the strict rule; a small positive value lets exact ties match.
    allow_negative : bool, default=True
        Add rows that follow the reversed series.
    approx_violations : int, default=1
        Add rows breaking at most this many adjacent comparisons; 0 disables.
    n_jobs : int or None, default=None
        Worker threads for fitness evaluation; ``None`` or 0 uses all CPUs.
    random_state : int, RandomState or None, default=None

    Attributes
    ----------
    rows_ : ndarray of shape (n_found, n_rows), dtype=bool
    columns_ : ndarray of shape (n_found, n_cols), dtype=bool
    biclusters_list_ : list of Bicluster
        Resolved biclusters, best first; ``series`` keeps the column order.
    n_iter_ : int
        Generations actually run.
    stopped_by_tabu_ : bool
    best_fitness_history_ : list of float
    """

    def __init__(self, n_biclusters=100, max_iterations=5000, population_size=400, elite_fraction=0.25,
                 tournament_size=4, p_insertion=0.30, p_deletion=0.15, p_swap=0.15, p_substitution=0.15,
                 p_crossover=0.25, overlap_threshold=0.75, top_rank_capacity=100, penalty_base=1.2,
                 sigma=None, tolerance=0.0, allow_negative=True, approx_violations=1, n_jobs=None,
                 random_state=None):
        self.n_biclusters = n_biclusters
        self.max_iterations = max_iterations
        self.population_size = population_size
        self.elite_fraction = elite_fraction
        self.tournament_size = tournament_size
        self.p_insertion = p_insertion
        self.p_deletion = p_deletion
        self.p_swap = p_swap
        self.p_substitution = p_substitution
        self.p_crossover = p_crossover
        self.overlap_threshold = overlap_threshold
        self.top_rank_capacity = top_rank_capacity
        self.penalty_base = penalty_base
        self.sigma = sigma
        self.tolerance = tolerance
        self.allow_negative = allow_negative
        self.approx_violations = approx_violations
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _config(self, seed: int) -> EvolutionConfig:
        return EvolutionConfig(
            population_size=self.population_size,
            max_iterations=self.max_iterations,
            elite_fraction=self.elite_fraction,
            tournament_size=self.tournament_size,
            p_insertion=self.p_insertion,
            p_deletion=self.p_deletion,
            p_swap=self.p_swap,
            p_substitution=self.p_substitution,
            p_crossover=self.p_crossover,
            overlap_threshold=self.overlap_threshold,
            top_rank_capacity=self.top_rank_capacity,
            penalty_base=self.penalty_base,
            rng_seed=seed,
            sigma=self.sigma,
            tolerance=self.tolerance,
        )

    def fit(self, X, y=None, callback=None):
        """Search ``X`` for biclusters.

        ``callback(generation, top_rank)`` is forwarded to the search loop.
        """
        if self.n_biclusters < 1:
            raise ValueError("n_biclusters must be positive")
        if isinstance(X, ExpressionMatrix):
            matrix = X
        else:
            X = check_array(X, dtype=np.float64, ensure_min_features=3)
            matrix = ExpressionMatrix(X)
        self.n_features_in_ = matrix.n_cols
        if isinstance(self.random_state, (int, np.integer)):
            seed = int(self.random_state)
        else:
            seed = int(check_random_state(self.random_state).randint(np.iinfo(np.int32).max))
        cfg = self._config(seed)

        result = run(matrix, cfg, threads=self.n_jobs or 0, callback=callback)
        self.top_rank_ = result.top_rank
        self.n_iter_ = result.n_generations
        self.stopped_by_tabu_ = result.stopped_by_tabu
        self.best_fitness_history_ = result.best_fitness

        params = FitnessParams(self.sigma or default_sigma(matrix.n_rows))
        series = result.top_rank.series[: self.n_biclusters]
        self.biclusters_list_: list[Bicluster] = resolve(
            matrix, series, params, tolerance=self.tolerance,
            allow_negative=self.allow_negative, approx_violations=self.approx_violations,
        )
        n = len(self.biclusters_list_)
        self.rows_ = np.zeros((n, matrix.n_rows), dtype=bool)
        self.columns_ = np.zeros((n, matrix.n_cols), dtype=bool)
        for k, b in enumerate(self.biclusters_list_):
            self.rows_[k, list(b.rows)] = True
            self.columns_[k, list(b.series)] = True
        return self

    @property
    def fitness_(self) -> np.ndarray:
        check_is_fitted(self, "biclusters_list_")
        return np.array([b.fitness for b in self.biclusters_list_])

    @property
    def series_(self) -> list[tuple[int, ...]]:
        check_is_fitted(self, "biclusters_list_")
        return [b.series for b in self.biclusters_list_]
