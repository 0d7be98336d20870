"""Per-BS distributed ANR behavior and X2 reciprocal additions.

This module reproduces the pathologies the central engine has to manage:
threshold-gated additions of anything enough UEs can hear, slow timer-based
removals of idle neighbors, and reflexive reverse additions over X2.  All
table mutations go through the model ops so blacklists are enforced at
insertion and every change is tracked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .engine import DanrAttributes
from .metrics import PmRunRecord
from .model import (
    OK,
    REJECT_X2_BLACKLIST,
    Actor,
    CellId,
    IdAllocator,
    ListState,
    NeighborRelation,
    Nrt,
    TrackingTables,
    nrt_insert,
    nrt_remove,
)


@dataclass(frozen=True)
class UeReport:
    """One UE's measurement of a detectable non-member cell."""

    ue_id: int
    target_db_id: int
    rsrp_dbm: float
    rsrq_db: float


@dataclass
class DanrCellState:
    """Per-cell timer state: consecutive runs without any HO attempt per target."""

    no_ho_runs: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {str(t): v for t, v in sorted(self.no_ho_runs.items())}

    @classmethod
    def from_dict(cls, d: dict) -> "DanrCellState":
        return cls(no_ho_runs={int(t): v for t, v in d.items()})


def danr_detect_and_add(
    cell: CellId,
    reports: list[UeReport],
    attrs: DanrAttributes,
    nrt: Nrt,
    lists: ListState,
    tracking: TrackingTables,
    ids: IdAllocator,
    cells: dict[int, CellId],
    run: int,
) -> tuple[list[NeighborRelation], list[tuple[int, str]]]:
    """Add every same-layer non-member heard well enough by enough UEs.

    A target qualifies when at least ``ue_min_count`` distinct UEs report it
    at or above both signal thresholds.  Insertions rejected by policy are
    returned with their reason and not retried within the run.
    """
    added: list[NeighborRelation] = []
    rejected: list[tuple[int, str]] = []
    qualified_ues: dict[int, set[int]] = {}
    qualified_levels: dict[int, list[float]] = {}
    for rep in reports:
        if rep.rsrp_dbm >= attrs.cell_rsrp_thr_dbm and rep.rsrq_db >= attrs.cell_rsrq_thr_db:
            qualified_ues.setdefault(rep.target_db_id, set()).add(rep.ue_id)
            qualified_levels.setdefault(rep.target_db_id, []).append(rep.rsrp_dbm)
    members = nrt.targets()
    # Strongest detected target first, so a filling table keeps the best ones.
    by_strength = sorted(
        qualified_ues,
        key=lambda t: (-(sum(qualified_levels[t]) / len(qualified_levels[t])), t),
    )
    for target_id in by_strength:
        if len(qualified_ues[target_id]) < attrs.ue_min_count:
            continue
        target = cells[target_id]
        if target.rat is not cell.rat or target.freq_layer != cell.freq_layer:
            continue
        if target_id in members or target_id == cell.cell_db_id:
            continue
        rel = NeighborRelation.create(ids.new_relation_id(), cell, target, Actor.DANR, run)
        outcome = nrt_insert(nrt, rel, lists, tracking, run)
        if outcome == OK:
            added.append(rel)
        else:
            rejected.append((target_id, outcome))
    return added, rejected


def danr_timer_removal(
    cell: CellId,
    state: DanrCellState,
    records: dict[int, PmRunRecord],
    attrs: DanrAttributes,
    nrt: Nrt,
    tracking: TrackingTables,
    run: int,
) -> list[int]:
    """Remove members that saw no HO attempt for ``removal_timer_runs`` runs.

    Counters reset on any attempt and whitelist-protected entries just keep
    aging without ever being removed.
    """
    removed: list[int] = []
    members = sorted(nrt.targets())
    for t in members:
        rec = records.get(t)
        if rec is None:
            continue
        if rec.a_ho == 0:
            state.no_ho_runs[t] = state.no_ho_runs.get(t, 0) + 1
        else:
            state.no_ho_runs[t] = 0
        if state.no_ho_runs[t] >= attrs.removal_timer_runs:
            if nrt_remove(nrt, t, Actor.DANR, tracking, run) == OK:
                removed.append(t)
                del state.no_ho_runs[t]
    # Drop timers for targets that left the table through other controllers.
    for t in sorted(set(state.no_ho_runs) - nrt.targets()):
        del state.no_ho_runs[t]
    return removed


def x2_reciprocal_add(
    relation: NeighborRelation,
    nrts: dict[int, Nrt],
    lists: ListState,
    tracking: TrackingTables,
    ids: IdAllocator,
    x2_attempts: dict[tuple[int, int], int],
    run: int,
) -> tuple[str, NeighborRelation | None]:
    """Insert the reverse relation into the peer cell's table over X2.

    Every call counts as one setup attempt on the ordered BS pair; attempts
    toward a blacklisted peer are counted but never succeed.
    """
    src_bs = relation.source.bs_id
    tgt_bs = relation.target.bs_id
    if src_bs == tgt_bs:
        raise ValueError("X2 reciprocity applies only across base stations")
    key = (src_bs, tgt_bs)
    x2_attempts[key] = x2_attempts.get(key, 0) + 1
    if lists.x2_blocked(src_bs, tgt_bs):
        return REJECT_X2_BLACKLIST, None
    peer_nrt = nrts[relation.target.cell_db_id]
    reverse = NeighborRelation.create(
        ids.new_relation_id(), relation.target, relation.source, Actor.X2, run
    )
    outcome = nrt_insert(peer_nrt, reverse, lists, tracking, run)
    return outcome, (reverse if outcome == OK else None)
