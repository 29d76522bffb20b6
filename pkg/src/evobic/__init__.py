"""Evolutionary search for order-preserving biclusters."""

from .datamodel import (
    Bicluster,
    CbfPopulation,
    ExpressionMatrix,
    decode_population,
    encode_population,
    load_matrix,
    save_matrix,
)
from .estimator import EvolutionaryBiclustering
from .evolution import EvolutionConfig, TopRankList, run
from .metrics import jaccard, recovery, relevance

__version__ = "0.1.0"

__all__ = [
    "Bicluster",
    "CbfPopulation",
    "EvolutionConfig",
    "EvolutionaryBiclustering",
    "ExpressionMatrix",
    "TopRankList",
    "decode_population",
    "encode_population",
    "jaccard",
    "load_matrix",
    "recovery",
    "relevance",
    "run",
    "save_matrix",
]
