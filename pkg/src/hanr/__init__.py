"""Hybrid automatic neighbor relations engine with a deterministic network simulator."""

from .campaign import Campaign, ExperimentOutputs, replay_experiment, run_experiment
from .engine import (
    DanrAttributes,
    EngineSchedule,
    HanrEngine,
    PolicyParams,
    RankComponents,
    cusum_removal_candidates,
    rank_relation,
)
from .model import Actor, CellId, ListState, NeighborRelation, Nrt, Rat, RelType, TrackingTables
from .scenario import Scenario, default_scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "Actor",
    "Campaign",
    "CellId",
    "DanrAttributes",
    "EngineSchedule",
    "ExperimentOutputs",
    "HanrEngine",
    "ListState",
    "NeighborRelation",
    "Nrt",
    "PolicyParams",
    "Rat",
    "RankComponents",
    "RelType",
    "Scenario",
    "TrackingTables",
    "cusum_removal_candidates",
    "default_scenario",
    "load_scenario",
    "rank_relation",
    "replay_experiment",
    "run_experiment",
]
