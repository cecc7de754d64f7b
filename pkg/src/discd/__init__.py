"""Semantic hypothesis deduction over finite first-order worlds.

Sentences are grounded over a finite signature, counted exactly, and
scored by inductive confirmation. Nodes holding parts of a story exchange
their most useful sentences through a server until each can deduce the
hypothesis that fits every tracked entity.
"""

from .count import CounterConfig, ModelCounter, count_brute, count_models, probability
from .dataset import Dataset, GeneratorParams, generate, load, save, split, validate
from .fol import Signature, parse, render
from .ground import AtomIndex, GroundProblem, ground, to_cnf, to_dimacs
from .hintikka import (
    ConstituentModel, EvidenceSummary, min_samples, pac_epsilon_bound, posterior,
)
from .inductive import KnowledgeState, confirmation, cont
from .protocol import ExperimentLog, ProtocolConfig, bits_cost, run
from .task import HypothesisSet, bayes_risk, deduce, success_rate

__version__ = "0.1.0"

__all__ = [
    "CounterConfig",
    "ModelCounter",
    "count_brute",
    "count_models",
    "probability",
    "Dataset",
    "GeneratorParams",
    "generate",
    "load",
    "save",
    "split",
    "validate",
    "Signature",
    "parse",
    "render",
    "AtomIndex",
    "GroundProblem",
    "ground",
    "to_cnf",
    "to_dimacs",
    "ConstituentModel",
    "EvidenceSummary",
    "min_samples",
    "pac_epsilon_bound",
    "posterior",
    "KnowledgeState",
    "confirmation",
    "cont",
    "ExperimentLog",
    "ProtocolConfig",
    "bits_cost",
    "run",
    "HypothesisSet",
    "bayes_risk",
    "deduce",
    "success_rate",
]
