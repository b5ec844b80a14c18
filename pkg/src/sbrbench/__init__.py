"""Benchmark framework for session-based next-item recommendation."""

from .core import ItemIndex, Ranking, Recommender, Session, as_sessions, top_k
from .evaluation import EvalReport, evaluate, wilcoxon_signed_rank
from .factorize import BPRMF, FISM, FOSSIL, FPMC, SMF, FactorModelConfig
from .gru import GRU4Rec, GruConfig
from .harness import ALGORITHMS, ExperimentConfig, TuneSpec, make_algorithm, run_experiment, tune
from .neighbors import SFSKNN, SSKNN, VSKNN, ItemKNN, SessionKNN
from .rules import AssociationRules, MarkovChain, SequentialRules

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "AssociationRules", "BPRMF", "EvalReport", "ExperimentConfig", "FISM", "FOSSIL", "FPMC",
    "FactorModelConfig", "GRU4Rec", "GruConfig", "ItemIndex", "ItemKNN", "MarkovChain", "Ranking", "Recommender",
    "SFSKNN", "SMF", "SSKNN", "SequentialRules", "Session", "SessionKNN", "TuneSpec", "VSKNN", "as_sessions",
    "evaluate", "make_algorithm", "run_experiment", "top_k", "tune", "wilcoxon_signed_rank",
]
