"""Four-stage neighbor-relation management cycle.

Each cycle runs, in order: parameter management (tracking reconciliation,
window ingestion, empty-table rebuild, re-addition detection), distributed-ANR
attribute management (the threshold staircase), list management (NR and X2
black/whitelisting, PLMN enforcement), and table optimization (rank-based
cumulative-sum removal plus vacancy-driven additions).  A cycle is a pure
function of its inputs and the engine state, so two engines fed identical
records produce identical reports.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .metrics import MetricWindow, PmRunRecord, ingest_run, normalized_distances
from .model import (
    OK,
    Actor,
    CellId,
    EVENT_ADD,
    EVENT_REMOVE,
    IdAllocator,
    ListState,
    NeighborRelation,
    Nrt,
    TrackingTables,
    distance_km,
    nrt_insert,
    nrt_remove,
    relation_from_dict,
    relation_to_dict,
)

ACT_THR_RSRP = "THR_RSRP+1"
ACT_THR_RSRQ = "THR_RSRQ+1"
ACT_NR_ADD = "NR_ADD"
ACT_NR_REMOVE = "NR_REMOVE"
ACT_NR_BLACKLIST = "NR_BLACKLIST"
ACT_NR_WHITELIST = "NR_WHITELIST"
ACT_X2_BLACKLIST = "X2_BLACKLIST"
ACT_X2_WHITELIST = "X2_WHITELIST"
ACT_PLMN_BLOCK = "PLMN_BLOCK"
ACT_REBUILD = "REBUILD"


@dataclass
class EngineSchedule:
    """Cycle cadence: one cycle per ``anr_run_time_s`` until the window ends."""

    anr_run_time_s: float = 900.0
    time_window_s: float = 9000.0
    observation_window_runs: int = 10

    @property
    def total_runs(self) -> int:
        return int(self.time_window_s // self.anr_run_time_s)

    def validate(self) -> None:
        if self.anr_run_time_s <= 0 or self.time_window_s <= 0:
            raise ValueError("schedule durations must be positive")
        if self.total_runs < 1:
            raise ValueError("schedule yields zero runs")
        if self.observation_window_runs < 1:
            raise ValueError("observation window must be >= 1 run")


@dataclass
class DanrAttributes:
    """Per-BS distributed-ANR control parameters.

    Only the two signal thresholds are ever changed by the engine, one dB at
    a time, never downward.
    """

    active: bool = True
    cell_rsrp_thr_dbm: float = -110.0
    cell_rsrq_thr_db: float = -18.0
    ho_min_thr: float = 0.01
    rp_thr: float = 0.5
    rq_thr: float = 0.5
    ue_min_count: int = 3
    removal_timer_runs: int = 5

    def to_dict(self) -> dict:
        return {
            "active": self.active,
            "cell_rsrp_thr_dbm": self.cell_rsrp_thr_dbm,
            "cell_rsrq_thr_db": self.cell_rsrq_thr_db,
            "ho_min_thr": self.ho_min_thr,
            "rp_thr": self.rp_thr,
            "rq_thr": self.rq_thr,
            "ue_min_count": self.ue_min_count,
            "removal_timer_runs": self.removal_timer_runs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DanrAttributes":
        return cls(**d)


@dataclass
class PolicyParams:
    """Knobs for the under-specified corners of list management and optimization.

    ``whitelist_streak``, ``grace_runs`` and ``cooldown_runs`` default to W,
    W and 2W respectively when left unset.
    """

    nrt_capacity: int = 64
    n_repeat: int = 3
    whitelist_quantile: float = 0.2
    whitelist_streak: Optional[int] = None
    x2_attempt_limit: int = 3
    grace_runs: Optional[int] = None
    removal_cap: int = 4
    cooldown_runs: Optional[int] = None
    cusum_sensitivity: float = 0.5
    rebuild_k: int = 16

    def resolved(self, w: int) -> "PolicyParams":
        return replace(
            self,
            whitelist_streak=self.whitelist_streak if self.whitelist_streak is not None else w,
            grace_runs=self.grace_runs if self.grace_runs is not None else w,
            cooldown_runs=self.cooldown_runs if self.cooldown_runs is not None else 2 * w,
        )

    def validate(self) -> None:
        for name in (
            "nrt_capacity",
            "n_repeat",
            "whitelist_quantile",
            "whitelist_streak",
            "x2_attempt_limit",
            "removal_cap",
            "cusum_sensitivity",
            "rebuild_k",
        ):
            v = getattr(self, name)
            if v is None or v <= 0:
                raise ValueError(f"policy parameter {name} must be positive (got {v})")
        for name in ("grace_runs", "cooldown_runs"):
            v = getattr(self, name)
            if v is None or v < 0:
                raise ValueError(f"policy parameter {name} must be >= 0 (got {v})")


@dataclass(frozen=True)
class RankComponents:
    """The six window-averaged inputs of the ranking formula."""

    a_ns_ho: float
    a_rs_ho: float
    a_ps_ho: float
    a_nrsrp: float
    a_nrsrq: float
    n_dist: float


def rank_relation(c: RankComponents) -> float:
    """Soft rank in [-1, 4]: HO share + execution*preparation + signal - distance."""
    for name in ("a_ns_ho", "a_rs_ho", "a_ps_ho", "a_nrsrp", "a_nrsrq", "n_dist"):
        v = getattr(c, name)
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"rank component {name}={v} outside [0,1]")
    return c.a_ns_ho + c.a_rs_ho * c.a_ps_ho + (c.a_nrsrp + c.a_nrsrq - c.n_dist)


@dataclass(frozen=True)
class RankedEntry:
    """One table entry as seen by the removal detector."""

    target_db_id: int
    rank: float
    components: RankComponents
    no_remove: bool
    age_runs: int


def cusum_removal_candidates(
    ranked: list[RankedEntry],
    policy: PolicyParams,
) -> list[RankedEntry]:
    """Bottom-cluster detection over the sorted rank values.

    Ranks are sorted ascending; the cumulative sum of deviations from the
    mean bottoms out at the boundary between the poor cluster and the rest.
    The split is only acted on when its depth clears ``h * sigma * sqrt(n)``,
    which guarantees a homogeneous table yields nothing.  Protected and
    freshly created entries are then dropped and the result is capped at
    ``removal_cap``, worst ranked first.  The observation-window warm-up is
    enforced by the calling stage.
    """
    if len(ranked) < 2:
        return []
    ordered = sorted(ranked, key=lambda e: (e.rank, e.target_db_id))
    ranks = [e.rank for e in ordered]
    n = len(ranks)
    mean = math.fsum(ranks) / n
    sigma = math.sqrt(math.fsum((r - mean) ** 2 for r in ranks) / n)
    if sigma == 0.0:
        return []
    s = 0.0
    partial = []
    for r in ranks:
        s += r - mean
        partial.append(s)
    k_star = min(range(n), key=lambda i: partial[i])  # first index achieving the min
    if abs(partial[k_star]) <= policy.cusum_sensitivity * sigma * math.sqrt(n):
        return []
    candidates = [
        e
        for e in ordered[: k_star + 1]
        if not e.no_remove and e.age_runs >= policy.grace_runs
    ]
    return candidates[: policy.removal_cap]


def threshold_step_due(bad_history: dict[int, int], run: int) -> bool:
    """Staircase rule: step at run 1 on any bad addition, afterwards only
    when the bad count strictly increased versus the previous run."""
    current = bad_history.get(run, 0)
    if run == 1:
        return current > 0
    return current > bad_history.get(run - 1, 0)


def apply_attribute_step(
    attrs: DanrAttributes, history: dict[int, int], run: int, bad_count: int, metric: str
) -> bool:
    """Record this run's bad-addition count and raise the threshold by one
    dB when the staircase rule fires; thresholds never move down."""
    history[run] = bad_count
    if not threshold_step_due(history, run):
        return False
    if metric == "rsrp":
        attrs.cell_rsrp_thr_dbm += 1.0
    elif metric == "rsrq":
        attrs.cell_rsrq_thr_db += 1.0
    else:
        raise ValueError(f"unknown threshold metric {metric!r}")
    return True


def count_bad_additions(
    new_relations: Iterable[NeighborRelation],
    windows: dict[int, MetricWindow],
    ho_min_thr: float,
    signal_thr: float,
    signal_metric: str,
) -> int:
    """Count fresh distributed-ANR additions that are poor on both gates.

    A relation is bad only when its HO share is below ``ho_min_thr`` and its
    averaged normalized signal is below ``signal_thr``; failing a single gate
    is not enough, and relations created by other controllers never count.
    """
    bad = 0
    for rel in new_relations:
        if rel.created_by is not Actor.DANR:
            continue
        win = windows.get(rel.source.cell_db_id)
        if win is None:
            continue
        a_ns = win.average_or_zero(rel.target.cell_db_id, "ns_ho")
        if a_ns < ho_min_thr:
            a_sig = win.average_or_zero(rel.target.cell_db_id, signal_metric)
            if a_sig < signal_thr:
                bad += 1
    return bad


@dataclass
class CycleAction:
    """One mutation performed by a cycle, in execution order."""

    run: int
    bs_id: int
    cell_db_id: Optional[int]
    action: str
    target_db_id: Optional[int]
    reason: str
    rank_at_action: Optional[float] = None
    components: Optional[RankComponents] = None


@dataclass
class CycleReport:
    """Everything one cycle changed, plus the cells it had to skip."""

    run: int
    actions: list[CycleAction] = field(default_factory=list)
    skipped_cells: list[int] = field(default_factory=list)

    def add(self, action: CycleAction) -> None:
        self.actions.append(action)


def _pair_key(pair: tuple[int, int]) -> str:
    return f"{pair[0]}:{pair[1]}"


def _pair_from_key(key: str) -> tuple[int, int]:
    a, b = key.split(":")
    return (int(a), int(b))


class HanrEngine:
    """Owner of all managed state; one instance drives one network."""

    def __init__(
        self,
        cells: dict[int, CellId],
        schedule: EngineSchedule,
        policy: PolicyParams,
        danr_attrs: dict[int, DanrAttributes],
        plmn_blacklist: Iterable[str] = (),
    ) -> None:
        schedule.validate()
        self.cells = dict(cells)
        self.schedule = schedule
        self.policy = policy.resolved(schedule.observation_window_runs)
        self.policy.validate()
        self.lists = ListState(plmn_blacklist=set(plmn_blacklist))
        self.tracking = TrackingTables()
        self.ids = IdAllocator()
        self.nrts: dict[int, Nrt] = {
            cid: Nrt(cell, self.policy.nrt_capacity) for cid, cell in sorted(cells.items())
        }
        self.windows: dict[int, MetricWindow] = {
            cid: MetricWindow(schedule.observation_window_runs) for cid in sorted(cells)
        }
        self.bs_ids = sorted({c.bs_id for c in cells.values()})
        self.cells_by_bs: dict[int, list[int]] = {
            bs: sorted(cid for cid, c in cells.items() if c.bs_id == bs) for bs in self.bs_ids
        }
        self.attrs: dict[int, DanrAttributes] = {bs: danr_attrs[bs] for bs in self.bs_ids}
        self.bad_rsrp: dict[int, dict[int, int]] = {bs: {} for bs in self.bs_ids}
        self.bad_rsrq: dict[int, dict[int, int]] = {bs: {} for bs in self.bs_ids}
        self.increments_rsrp: dict[int, int] = {bs: 0 for bs in self.bs_ids}
        self.increments_rsrq: dict[int, int] = {bs: 0 for bs in self.bs_ids}
        self.top_streak: dict[tuple[int, int], int] = {}
        self.below_median_streak: dict[tuple[int, int], int] = {}
        self.rank_history: dict[tuple[int, int], float] = {}
        self.x2_attempts: dict[tuple[int, int], int] = {}
        self.run_counter = 1
        self.prev_targets: dict[int, frozenset[int]] = {
            cid: frozenset() for cid in sorted(cells)
        }
        # Tracking events at or below this seq were seen by a previous cycle.
        self._reconciled_seq = 0

    # ------------------------------------------------------------------ helpers

    def _cell_order(self) -> list[int]:
        return [cid for bs in self.bs_ids for cid in self.cells_by_bs[bs]]

    def _bs_plmn(self, bs_id: int) -> str:
        return self.cells[self.cells_by_bs[bs_id][0]].plmn

    def _bs_had_increment(self, bs_id: int) -> bool:
        return self.increments_rsrp[bs_id] > 0 or self.increments_rsrq[bs_id] > 0

    def new_relation(self, source: CellId, target: CellId, created_by: Actor, run: int) -> NeighborRelation:
        return NeighborRelation.create(self.ids.new_relation_id(), source, target, created_by, run)

    def operator_add(self, source_db_id: int, target_db_id: int, run: int) -> str:
        rel = self.new_relation(
            self.cells[source_db_id], self.cells[target_db_id], Actor.OPERATOR, run
        )
        return nrt_insert(self.nrts[source_db_id], rel, self.lists, self.tracking, run)

    def operator_remove(self, source_db_id: int, target_db_id: int, run: int) -> str:
        return nrt_remove(self.nrts[source_db_id], target_db_id, Actor.OPERATOR, self.tracking, run)

    def rank_table(self, cell_db_id: int) -> dict[int, RankedEntry]:
        """Ranked view of the cell's current table; empty windows score zero."""
        nrt = self.nrts[cell_db_id]
        if not nrt.entries:
            return {}
        ndist = normalized_distances(nrt)
        win = self.windows[cell_db_id]
        table: dict[int, RankedEntry] = {}
        for e in nrt.entries:
            t = e.target.cell_db_id
            comps = RankComponents(
                a_ns_ho=win.average_or_zero(t, "ns_ho"),
                a_rs_ho=win.average_or_zero(t, "rs_ho"),
                a_ps_ho=win.average_or_zero(t, "ps_ho"),
                a_nrsrp=win.average_or_zero(t, "nrsrp"),
                a_nrsrq=win.average_or_zero(t, "nrsrq"),
                n_dist=ndist[t],
            )
            table[t] = RankedEntry(
                target_db_id=t,
                rank=rank_relation(comps),
                components=comps,
                no_remove=e.no_remove,
                age_runs=self.run_counter - e.created_at_run,
            )
        return table

    # ------------------------------------------------------------------ cycle

    def run_cycle(self, pm_records: dict[int, dict[int, PmRunRecord]]) -> CycleReport:
        """Execute one full management cycle and advance the run counter."""
        run = self.run_counter
        report = CycleReport(run=run)
        skipped: set[int] = set()
        repetitive: dict[int, list[int]] = {}

        # Stage 1: parameter management.
        for cid in self._cell_order():
            nrt = self.nrts[cid]
            self._reconcile_tracking(cid, run)
            if not nrt.entries:
                self._rebuild_empty_nrt(cid, run, report)
            cell_records = pm_records.get(cid)
            if nrt.entries and cell_records is None:
                skipped.add(cid)
                report.skipped_cells.append(cid)
            elif cell_records:
                ingest_run(self.windows[cid], cell_records.values())
            repetitive[cid] = [
                t
                for (_, t) in self.tracking.pairs_for_source(cid)
                if self.tracking.count_readditions(cid, t) >= self.policy.n_repeat
            ]

        # Stage 2: distributed-ANR attribute management.
        for bs in self.bs_ids:
            self._stage_danr_attributes(bs, run, skipped, report)

        # Stage 3: list management.
        for bs in self.bs_ids:
            self._stage_lists(bs, run, skipped, repetitive, report)
        self._stage_x2_lists(run, report)
        self._prune_streaks()

        # Stage 4: table optimization.
        for cid in self._cell_order():
            if cid in skipped:
                continue
            self._stage_optimize(cid, run, report)

        self._assert_invariants()
        self.prev_targets = {cid: frozenset(self.nrts[cid].targets()) for cid in self._cell_order()}
        self._reconciled_seq = self.tracking._next_seq - 1
        self.run_counter += 1
        return report

    # ------------------------------------------------------------------ stage 1

    def _reconcile_tracking(self, cell_db_id: int, run: int) -> None:
        """Backfill tracking records for table edits that bypassed the model ops.

        Normal controllers log through nrt_insert/nrt_remove; anything else
        (direct operator surgery) is detected against the previous snapshot
        and recorded as an operator action so the log stays replayable.
        """
        nrt = self.nrts[cell_db_id]
        prev = self.prev_targets.get(cell_db_id, frozenset())
        cur = frozenset(nrt.targets())
        tracked_adds = {
            r.target_db_id
            for r in self.tracking.additions
            if r.source_db_id == cell_db_id and r.seq > self._reconciled_seq
        }
        tracked_rms = {
            r.target_db_id
            for r in self.tracking.removals
            if r.source_db_id == cell_db_id and r.seq > self._reconciled_seq
        }
        for t in sorted(cur - prev):
            if t not in tracked_adds:
                entry = nrt.get(t)
                rec = self.tracking.record_addition(entry, run, Actor.OPERATOR)
                entry.created_seq = rec.seq
        for t in sorted(prev - cur):
            if t not in tracked_rms:
                ghost = self._last_known_relation(cell_db_id, t)
                self.tracking.record_removal(ghost, run, Actor.OPERATOR)

    def _last_known_relation(self, source_db_id: int, target_db_id: int) -> NeighborRelation:
        last_add = None
        for rec in self.tracking.additions:
            if rec.source_db_id == source_db_id and rec.target_db_id == target_db_id:
                last_add = rec
        source = self.cells[source_db_id]
        target = self.cells[target_db_id]
        rel = NeighborRelation.create(
            last_add.relation_db_id if last_add else 0, source, target, Actor.OPERATOR, 0
        )
        if last_add:
            rel.rel_type = last_add.rel_type
        return rel

    def _rebuild_empty_nrt(self, cell_db_id: int, run: int, report: CycleReport) -> None:
        """Refill a wiped table with the nearest insertable cells, same layer first."""
        nrt = self.nrts[cell_db_id]
        owner = nrt.owner
        pool = sorted(
            (c for cid, c in self.cells.items() if cid != cell_db_id),
            key=lambda c: (
                0 if (c.freq_layer == owner.freq_layer and c.rat is owner.rat) else 1,
                distance_km(owner, c),
                c.cell_db_id,
            ),
        )
        report.add(
            CycleAction(run, owner.bs_id, cell_db_id, ACT_REBUILD, None, "empty_nrt")
        )
        added = 0
        for cand in pool:
            if added >= self.policy.rebuild_k:
                break
            rel = self.new_relation(owner, cand, Actor.HANR, run)
            if nrt_insert(nrt, rel, self.lists, self.tracking, run) == OK:
                added += 1
                report.add(
                    CycleAction(
                        run, owner.bs_id, cell_db_id, ACT_NR_ADD, cand.cell_db_id, "rebuild"
                    )
                )

    # ------------------------------------------------------------------ stage 2

    def _new_danr_relations(self, bs_id: int, run: int, skipped: set[int]) -> list[NeighborRelation]:
        rels = []
        for cid in self.cells_by_bs[bs_id]:
            if cid in skipped:
                continue
            for e in self.nrts[cid].entries:
                if e.created_at_run == run and e.created_by is Actor.DANR:
                    rels.append(e)
        return rels

    def _stage_danr_attributes(
        self, bs_id: int, run: int, skipped: set[int], report: CycleReport
    ) -> None:
        attrs = self.attrs[bs_id]
        if not attrs.active:
            return
        new_rels = self._new_danr_relations(bs_id, run, skipped)
        bad_p = count_bad_additions(new_rels, self.windows, attrs.ho_min_thr, attrs.rp_thr, "nrsrp")
        bad_q = count_bad_additions(new_rels, self.windows, attrs.ho_min_thr, attrs.rq_thr, "nrsrq")
        if apply_attribute_step(attrs, self.bad_rsrp[bs_id], run, bad_p, "rsrp"):
            self.increments_rsrp[bs_id] += 1
            report.add(CycleAction(run, bs_id, None, ACT_THR_RSRP, None, f"bad_additions={bad_p}"))
        if apply_attribute_step(attrs, self.bad_rsrq[bs_id], run, bad_q, "rsrq"):
            self.increments_rsrq[bs_id] += 1
            report.add(CycleAction(run, bs_id, None, ACT_THR_RSRQ, None, f"bad_additions={bad_q}"))

    # ------------------------------------------------------------------ stage 3

    def _stage_lists(
        self,
        bs_id: int,
        run: int,
        skipped: set[int],
        repetitive: dict[int, list[int]],
        report: CycleReport,
    ) -> None:
        # Repetitive pairs get blacklisted once the BS attributes have been
        # tightened at least once; whitelisted pairs are exempt.
        if self._bs_had_increment(bs_id):
            for cid in self.cells_by_bs[bs_id]:
                nrt = self.nrts[cid]
                table = None
                for t in repetitive.get(cid, []):
                    pair = (cid, t)
                    if pair in self.lists.nr_whitelist or pair in self.lists.nr_blacklist:
                        continue
                    entry = nrt.get(t)
                    rank = comps = None
                    if entry is not None and cid not in skipped:
                        if table is None:
                            table = self.rank_table(cid)
                        if t in table:
                            rank, comps = table[t].rank, table[t].components
                    self.lists.blacklist_nr(pair)
                    if entry is not None:
                        entry.blacklisted = True
                        nrt_remove(nrt, t, Actor.HANR, self.tracking, run)
                        report.add(
                            CycleAction(run, bs_id, cid, ACT_NR_REMOVE, t, "blacklisted", rank, comps)
                        )
                    report.add(
                        CycleAction(run, bs_id, cid, ACT_NR_BLACKLIST, t, "repetitive_readdition", rank)
                    )

        # Operator PLMN policy dominates everything else.
        for cid in self.cells_by_bs[bs_id]:
            nrt = self.nrts[cid]
            for e in list(nrt.entries):
                if e.target.plmn in self.lists.plmn_blacklist:
                    t = e.target.cell_db_id
                    nrt.entries.remove(e)
                    self.tracking.record_removal(e, run, Actor.HANR)
                    report.add(CycleAction(run, bs_id, cid, ACT_PLMN_BLOCK, t, "plmn_blacklist"))

        # Whitelist bookkeeping from this cycle's ranks.
        for cid in self.cells_by_bs[bs_id]:
            if cid in skipped:
                continue
            self._update_whitelist_streaks(cid, run, report)

    def _update_whitelist_streaks(self, cell_db_id: int, run: int, report: CycleReport) -> None:
        table = self.rank_table(cell_db_id)
        if not table:
            return
        m = self.policy.whitelist_streak
        n = len(table)
        top_n = max(1, math.ceil(self.policy.whitelist_quantile * n))
        by_rank = sorted(table.values(), key=lambda e: (-e.rank, e.target_db_id))
        top_set = {e.target_db_id for e in by_rank[:top_n]}
        median = statistics.median(e.rank for e in table.values())
        nrt = self.nrts[cell_db_id]
        bs_id = nrt.owner.bs_id
        for t in sorted(table):
            pair = (cell_db_id, t)
            self.top_streak[pair] = self.top_streak.get(pair, 0) + 1 if t in top_set else 0
            below = table[t].rank < median
            self.below_median_streak[pair] = (
                self.below_median_streak.get(pair, 0) + 1 if below else 0
            )
            entry = nrt.get(t)
            if (
                self.top_streak[pair] >= m
                and pair not in self.lists.nr_whitelist
                and self.lists.whitelist_nr(pair)
            ):
                if entry is not None:
                    entry.no_remove = True
                report.add(
                    CycleAction(
                        run, bs_id, cell_db_id, ACT_NR_WHITELIST, t, "top_streak", table[t].rank
                    )
                )
            elif pair in self.lists.nr_whitelist and self.below_median_streak[pair] >= m:
                self.lists.unwhitelist_nr(pair)
                if entry is not None:
                    entry.no_remove = False
                report.add(
                    CycleAction(
                        run, bs_id, cell_db_id, ACT_NR_WHITELIST, t, "revoked", table[t].rank
                    )
                )

    def _stage_x2_lists(self, run: int, report: CycleReport) -> None:
        present_bs = {
            e.target.bs_id for nrt in self.nrts.values() for e in nrt.entries
        }
        m = self.policy.whitelist_streak
        for bs in self.bs_ids:
            for peer in self.bs_ids:
                if peer == bs:
                    continue
                pair = (bs, peer)
                if not self.lists.x2_blocked(bs, peer):
                    if self._bs_plmn(peer) in self.lists.plmn_blacklist:
                        self.lists.blacklist_x2(pair)
                        report.add(
                            CycleAction(run, bs, None, ACT_X2_BLACKLIST, peer, "plmn_blacklist")
                        )
                        continue
                    attempts = self.x2_attempts.get(pair, 0) + self.x2_attempts.get(
                        (peer, bs), 0
                    )
                    if attempts >= self.policy.x2_attempt_limit and peer not in present_bs:
                        self.lists.blacklist_x2(pair)
                        report.add(
                            CycleAction(
                                run, bs, None, ACT_X2_BLACKLIST, peer, "no_presence"
                            )
                        )
                        continue
                if bs < peer and not self.lists.x2_blocked(bs, peer):
                    self._maybe_whitelist_x2(bs, peer, m, run, report)

    def _maybe_whitelist_x2(
        self, bs: int, peer: int, m: int, run: int, report: CycleReport
    ) -> None:
        if self.lists.x2_whitelisted(bs, peer):
            return
        forward = self._mutual_pairs(bs, peer)
        backward = self._mutual_pairs(peer, bs)
        if not forward or not backward:
            return
        if all(self.top_streak.get(p, 0) >= m for p in forward + backward):
            self.lists.whitelist_x2((bs, peer))
            self.lists.whitelist_x2((peer, bs))
            report.add(CycleAction(run, bs, None, ACT_X2_WHITELIST, peer, "mutual_top_streak"))

    def _mutual_pairs(self, bs: int, peer: int) -> list[tuple[int, int]]:
        pairs = []
        for cid in self.cells_by_bs[bs]:
            for e in self.nrts[cid].entries:
                if e.target.bs_id == peer:
                    pairs.append((cid, e.target.cell_db_id))
        return pairs

    def _prune_streaks(self) -> None:
        member = {
            (cid, t) for cid, nrt in self.nrts.items() for t in nrt.targets()
        }
        for store in (self.top_streak, self.below_median_streak):
            for pair in sorted(set(store) - member):
                del store[pair]

    # ------------------------------------------------------------------ stage 4

    def _stage_optimize(self, cell_db_id: int, run: int, report: CycleReport) -> None:
        nrt = self.nrts[cell_db_id]
        bs_id = nrt.owner.bs_id
        table = self.rank_table(cell_db_id)
        for t, entry in table.items():
            self.rank_history[(cell_db_id, t)] = entry.rank
        if run >= self.schedule.observation_window_runs and table:
            for cand in cusum_removal_candidates(list(table.values()), self.policy):
                if nrt_remove(nrt, cand.target_db_id, Actor.HANR, self.tracking, run) == OK:
                    report.add(
                        CycleAction(
                            run,
                            bs_id,
                            cell_db_id,
                            ACT_NR_REMOVE,
                            cand.target_db_id,
                            "cusum",
                            cand.rank,
                            cand.components,
                        )
                    )
        self._fill_vacancies(cell_db_id, run, report)

    def _fill_vacancies(self, cell_db_id: int, run: int, report: CycleReport) -> None:
        nrt = self.nrts[cell_db_id]
        owner = nrt.owner
        vacancies = nrt.capacity - len(nrt.entries)
        if vacancies <= 0:
            return
        members = nrt.targets()
        candidates = []
        for cid, cell in sorted(self.cells.items()):
            if cid == cell_db_id or cid in members:
                continue
            pair = (cell_db_id, cid)
            if pair in self.lists.nr_blacklist:
                continue
            if cell.plmn in self.lists.plmn_blacklist:
                continue
            if cell.bs_id != owner.bs_id and self.lists.x2_blocked(owner.bs_id, cell.bs_id):
                continue
            last_removed = self.tracking.last_removal_run(cell_db_id, cid)
            if last_removed is not None and run - last_removed <= self.policy.cooldown_runs:
                continue
            candidates.append(cell)
        # Known performers first (best rank leading), then fresh cells by distance.
        hist = self.rank_history
        candidates.sort(
            key=lambda c: (
                0 if (cell_db_id, c.cell_db_id) in hist else 1,
                -hist.get((cell_db_id, c.cell_db_id), 0.0),
                distance_km(owner, c),
                c.cell_db_id,
            )
        )
        added = 0
        for cand in candidates:
            if added >= vacancies:
                break
            rel = self.new_relation(owner, cand, Actor.HANR, run)
            if nrt_insert(nrt, rel, self.lists, self.tracking, run) == OK:
                added += 1
                report.add(
                    CycleAction(
                        run,
                        owner.bs_id,
                        cell_db_id,
                        ACT_NR_ADD,
                        cand.cell_db_id,
                        "optimization",
                        hist.get((cell_db_id, cand.cell_db_id)),
                    )
                )

    # ------------------------------------------------------------------ checks

    def _assert_invariants(self) -> None:
        self.lists.validate()
        for nrt in self.nrts.values():
            nrt.validate(self.lists)

    # ------------------------------------------------------------------ state

    def to_dict(self) -> dict:
        return {
            "run_counter": self.run_counter,
            "reconciled_seq": self._reconciled_seq,
            "ids": self.ids.to_dict(),
            "tracking": self.tracking.to_dict(),
            "lists": self.lists.to_dict(),
            "nrts": {
                str(cid): [relation_to_dict(e) for e in self.nrts[cid].entries]
                for cid in self._cell_order()
            },
            "windows": {str(cid): self.windows[cid].to_dict() for cid in self._cell_order()},
            "attrs": {str(bs): self.attrs[bs].to_dict() for bs in self.bs_ids},
            "bad_rsrp": {str(bs): {str(r): v for r, v in sorted(h.items())} for bs, h in self.bad_rsrp.items()},
            "bad_rsrq": {str(bs): {str(r): v for r, v in sorted(h.items())} for bs, h in self.bad_rsrq.items()},
            "increments_rsrp": {str(bs): v for bs, v in self.increments_rsrp.items()},
            "increments_rsrq": {str(bs): v for bs, v in self.increments_rsrq.items()},
            "top_streak": {_pair_key(p): v for p, v in sorted(self.top_streak.items())},
            "below_median_streak": {
                _pair_key(p): v for p, v in sorted(self.below_median_streak.items())
            },
            "rank_history": {_pair_key(p): v for p, v in sorted(self.rank_history.items())},
            "x2_attempts": {_pair_key(p): v for p, v in sorted(self.x2_attempts.items())},
            "prev_targets": {
                str(cid): sorted(ts) for cid, ts in sorted(self.prev_targets.items())
            },
        }

    def load_state(self, d: dict) -> None:
        self.run_counter = int(d["run_counter"])
        self._reconciled_seq = int(d["reconciled_seq"])
        self.ids = IdAllocator.from_dict(d["ids"])
        self.tracking = TrackingTables.from_dict(d["tracking"])
        self.lists = ListState.from_dict(d["lists"])
        for cid_s, entries in d["nrts"].items():
            cid = int(cid_s)
            nrt = Nrt(self.cells[cid], self.policy.nrt_capacity)
            nrt.entries = [relation_from_dict(e, self.cells) for e in entries]
            self.nrts[cid] = nrt
        w = self.schedule.observation_window_runs
        self.windows = {
            int(cid): MetricWindow.from_dict(wd, w) for cid, wd in d["windows"].items()
        }
        self.attrs = {int(bs): DanrAttributes.from_dict(a) for bs, a in d["attrs"].items()}
        self.bad_rsrp = {
            int(bs): {int(r): v for r, v in h.items()} for bs, h in d["bad_rsrp"].items()
        }
        self.bad_rsrq = {
            int(bs): {int(r): v for r, v in h.items()} for bs, h in d["bad_rsrq"].items()
        }
        self.increments_rsrp = {int(bs): v for bs, v in d["increments_rsrp"].items()}
        self.increments_rsrq = {int(bs): v for bs, v in d["increments_rsrq"].items()}
        self.top_streak = {_pair_from_key(k): v for k, v in d["top_streak"].items()}
        self.below_median_streak = {
            _pair_from_key(k): v for k, v in d["below_median_streak"].items()
        }
        self.rank_history = {_pair_from_key(k): v for k, v in d["rank_history"].items()}
        self.x2_attempts = {_pair_from_key(k): v for k, v in d["x2_attempts"].items()}
        self.prev_targets = {
            int(cid): frozenset(ts) for cid, ts in d["prev_targets"].items()
        }
