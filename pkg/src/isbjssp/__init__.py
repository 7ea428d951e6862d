"""Interrupting swap-allowed blocking job shop: simulator, dispatching rules,
and a GNN-embedding actor-critic scheduler trained with PPO."""

from .instance import (
    Instance,
    Operation,
    generate_instance,
    parse_instance,
    sample_training_size,
    serialize_instance,
    total_processing_time,
)
from .graph import DisjunctiveGraph, GraphObservation, NodeId, build_graph, node_features
from .sim import (
    Availability,
    Decision,
    EpisodeResult,
    SimState,
    TransitionSample,
    TIME_ADVANCE,
    brute_force_optimal,
    run_episode,
    validate_schedule,
)
from .pdr import Rule

__version__ = "0.1.0"

__all__ = [
    "Instance",
    "Operation",
    "parse_instance",
    "serialize_instance",
    "generate_instance",
    "sample_training_size",
    "total_processing_time",
    "DisjunctiveGraph",
    "GraphObservation",
    "NodeId",
    "build_graph",
    "node_features",
    "Availability",
    "Decision",
    "EpisodeResult",
    "SimState",
    "TransitionSample",
    "TIME_ADVANCE",
    "brute_force_optimal",
    "run_episode",
    "validate_schedule",
    "Rule",
    "__version__",
]
