"""Domain model: cells, neighbor relations, NRTs, tracking tables, list state.

Every table mutation goes through :func:`nrt_insert` / :func:`nrt_remove` so
that blacklist policy is enforced at a single choke point and each change
lands in the tracking log exactly once.  The tracking log is append-only and
is sufficient to rebuild any NRT from scratch (see
:func:`rebuild_nrt_from_tracking`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional


class Rat(str, Enum):
    """Radio access technology of a cell."""

    NR5G = "NR5G"
    EUTRAN = "EUTRAN"
    UTRAN = "UTRAN"
    GERAN = "GERAN"


class RelType(str, Enum):
    """Relation class derived from the two endpoint cells."""

    INTRA = "INTRA"
    INTER = "INTER"
    IRAT = "IRAT"


class Actor(str, Enum):
    """Controllers that may create or remove relations."""

    DANR = "DANR"
    X2 = "X2"
    OPERATOR = "OPERATOR"
    HANR = "HANR"


# Outcome codes shared by nrt_insert / nrt_remove.
OK = "ok"
REJECT_DUPLICATE = "duplicate_target"
REJECT_NR_BLACKLIST = "blacklisted_nr"
REJECT_PLMN_BLACKLIST = "blacklisted_plmn"
REJECT_CAPACITY = "capacity_full"
REJECT_X2_BLACKLIST = "x2_blacklisted_peer"
NOT_FOUND = "not_found"
PROTECTED = "protected"

EVENT_ADD = "ADD"
EVENT_REMOVE = "REMOVE"

DEFAULT_NRT_CAPACITY = 64


@dataclass(frozen=True)
class CellId:
    """Network-wide stable identity of one cell.

    ``cell_db_id`` is the globally unique database key; relation ids churn on
    every re-creation, so all dedup and list decisions key on this field.
    """

    bs_id: int
    cell_db_id: int
    plmn: str
    rat: Rat
    freq_layer: int
    position: tuple[float, float]  # planar (x_km, y_km)


def rel_type_for(source: CellId, target: CellId) -> RelType:
    if source.rat is not target.rat:
        return RelType.IRAT
    if source.freq_layer == target.freq_layer:
        return RelType.INTRA
    return RelType.INTER


def distance_km(a: CellId, b: CellId) -> float:
    return math.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1])


@dataclass
class NeighborRelation:
    """Directed source-cell -> target-cell entry of an NRT.

    ``relation_db_id`` is fresh for every creation event; ``created_seq`` is
    the tracking-log sequence number of the creating event and doubles as the
    creation timestamp.
    """

    relation_db_id: int
    source: CellId
    target: CellId
    rel_type: RelType
    created_by: Actor
    created_at_run: int
    created_seq: int = 0
    ho_allowed: bool = True
    no_remove: bool = False
    blacklisted: bool = False

    @classmethod
    def create(
        cls,
        relation_db_id: int,
        source: CellId,
        target: CellId,
        created_by: Actor,
        run: int,
    ) -> "NeighborRelation":
        return cls(
            relation_db_id=relation_db_id,
            source=source,
            target=target,
            rel_type=rel_type_for(source, target),
            created_by=created_by,
            created_at_run=run,
        )

    def pair(self) -> tuple[int, int]:
        return (self.source.cell_db_id, self.target.cell_db_id)


@dataclass
class IdAllocator:
    """Monotone relation-id source; ids are never reused."""

    next_relation_db_id: int = 1

    def new_relation_id(self) -> int:
        rid = self.next_relation_db_id
        self.next_relation_db_id += 1
        return rid

    def to_dict(self) -> dict:
        return {"next_relation_db_id": self.next_relation_db_id}

    @classmethod
    def from_dict(cls, d: dict) -> "IdAllocator":
        return cls(next_relation_db_id=int(d["next_relation_db_id"]))


@dataclass(frozen=True)
class TrackingRecord:
    """One append-only audit event: a relation added to or removed from an NRT."""

    event: str  # EVENT_ADD | EVENT_REMOVE
    source_db_id: int
    target_db_id: int
    relation_db_id: int
    rel_type: RelType
    run: int
    seq: int
    actor: Actor

    def to_dict(self) -> dict:
        return {
            "event": self.event,
            "source_db_id": self.source_db_id,
            "target_db_id": self.target_db_id,
            "relation_db_id": self.relation_db_id,
            "rel_type": self.rel_type.value,
            "run": self.run,
            "seq": self.seq,
            "actor": self.actor.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrackingRecord":
        return cls(
            event=d["event"],
            source_db_id=int(d["source_db_id"]),
            target_db_id=int(d["target_db_id"]),
            relation_db_id=int(d["relation_db_id"]),
            rel_type=RelType(d["rel_type"]),
            run=int(d["run"]),
            seq=int(d["seq"]),
            actor=Actor(d["actor"]),
        )


class TrackingTables:
    """Append-only addition/removal logs keyed by stable database ids.

    The shared ``seq`` counter totally orders events across all cells, which
    is what makes re-addition counting and event-sourcing replay well defined.
    """

    def __init__(self) -> None:
        self.additions: list[TrackingRecord] = []
        self.removals: list[TrackingRecord] = []
        self._next_seq = 1
        # Derived indexes; events arrive with monotone seq so the per-pair
        # lists stay chronologically sorted by construction.
        self._by_pair: dict[tuple[int, int], list[TrackingRecord]] = {}
        self._readd_count: dict[tuple[int, int], int] = {}
        self._removal_seen: set[tuple[int, int]] = set()
        self._last_removal_run: dict[tuple[int, int], int] = {}

    def _stamp(self) -> int:
        seq = self._next_seq
        self._next_seq += 1
        return seq

    def _index(self, rec: TrackingRecord) -> None:
        pair = (rec.source_db_id, rec.target_db_id)
        self._by_pair.setdefault(pair, []).append(rec)
        if rec.event == EVENT_REMOVE:
            self._removal_seen.add(pair)
            self._last_removal_run[pair] = rec.run
        elif pair in self._removal_seen:
            self._readd_count[pair] = self._readd_count.get(pair, 0) + 1

    def record_addition(self, rel: NeighborRelation, run: int, actor: Actor) -> TrackingRecord:
        rec = TrackingRecord(
            event=EVENT_ADD,
            source_db_id=rel.source.cell_db_id,
            target_db_id=rel.target.cell_db_id,
            relation_db_id=rel.relation_db_id,
            rel_type=rel.rel_type,
            run=run,
            seq=self._stamp(),
            actor=actor,
        )
        self.additions.append(rec)
        self._index(rec)
        return rec

    def record_removal(self, rel: NeighborRelation, run: int, actor: Actor) -> TrackingRecord:
        rec = TrackingRecord(
            event=EVENT_REMOVE,
            source_db_id=rel.source.cell_db_id,
            target_db_id=rel.target.cell_db_id,
            relation_db_id=rel.relation_db_id,
            rel_type=rel.rel_type,
            run=run,
            seq=self._stamp(),
            actor=actor,
        )
        self.removals.append(rec)
        self._index(rec)
        return rec

    def all_events(self) -> list[TrackingRecord]:
        return sorted(self.additions + self.removals, key=lambda r: r.seq)

    def events_for_pair(self, source_db_id: int, target_db_id: int) -> list[TrackingRecord]:
        return list(self._by_pair.get((source_db_id, target_db_id), []))

    def events_for_source(self, source_db_id: int) -> list[TrackingRecord]:
        return [rec for rec in self.all_events() if rec.source_db_id == source_db_id]

    def count_readditions(self, source_db_id: int, target_db_id: int) -> int:
        """Number of additions for the pair that follow at least one removal.

        The first-ever addition is not a re-addition; an unknown pair yields 0.
        """
        return self._readd_count.get((source_db_id, target_db_id), 0)

    def last_removal_run(self, source_db_id: int, target_db_id: int) -> Optional[int]:
        return self._last_removal_run.get((source_db_id, target_db_id))

    def pairs_for_source(self, source_db_id: int) -> list[tuple[int, int]]:
        pairs = {
            (rec.source_db_id, rec.target_db_id)
            for rec in self.additions
            if rec.source_db_id == source_db_id
        }
        return sorted(pairs)

    def to_dict(self) -> dict:
        return {
            "additions": [r.to_dict() for r in self.additions],
            "removals": [r.to_dict() for r in self.removals],
            "next_seq": self._next_seq,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrackingTables":
        t = cls()
        records = [TrackingRecord.from_dict(r) for r in d["additions"]]
        records += [TrackingRecord.from_dict(r) for r in d["removals"]]
        for rec in sorted(records, key=lambda r: r.seq):
            (t.additions if rec.event == EVENT_ADD else t.removals).append(rec)
            t._index(rec)
        t._next_seq = int(d["next_seq"])
        return t


@dataclass(frozen=True)
class NrtSnapshot:
    """Membership snapshot of an NRT, used for cycle-to-cycle diffing."""

    owner_db_id: int
    target_db_ids: frozenset[int]


@dataclass
class ListState:
    """Black/whitelists shared by all controllers.

    NR lists key on (source_db_id, target_db_id); X2 lists key on ordered
    (bs_id, peer_bs_id) but are enforced symmetrically since the underlying
    link is one link.  A pair can never be black- and whitelisted at once.
    """

    nr_blacklist: set[tuple[int, int]] = field(default_factory=set)
    nr_whitelist: set[tuple[int, int]] = field(default_factory=set)
    plmn_blacklist: set[str] = field(default_factory=set)
    x2_blacklist: set[tuple[int, int]] = field(default_factory=set)
    x2_whitelist: set[tuple[int, int]] = field(default_factory=set)

    def blacklist_nr(self, pair: tuple[int, int]) -> None:
        self.nr_whitelist.discard(pair)
        self.nr_blacklist.add(pair)

    def whitelist_nr(self, pair: tuple[int, int]) -> bool:
        """Whitelist unless blacklisted; returns True when listed."""
        if pair in self.nr_blacklist:
            return False
        self.nr_whitelist.add(pair)
        return True

    def unwhitelist_nr(self, pair: tuple[int, int]) -> None:
        self.nr_whitelist.discard(pair)

    def x2_blocked(self, bs_a: int, bs_b: int) -> bool:
        return (bs_a, bs_b) in self.x2_blacklist or (bs_b, bs_a) in self.x2_blacklist

    def x2_whitelisted(self, bs_a: int, bs_b: int) -> bool:
        return (bs_a, bs_b) in self.x2_whitelist or (bs_b, bs_a) in self.x2_whitelist

    def blacklist_x2(self, pair: tuple[int, int]) -> None:
        self.x2_whitelist.discard(pair)
        self.x2_whitelist.discard((pair[1], pair[0]))
        self.x2_blacklist.add(pair)

    def whitelist_x2(self, pair: tuple[int, int]) -> bool:
        if self.x2_blocked(*pair):
            return False
        self.x2_whitelist.add(pair)
        return True

    def validate(self) -> None:
        overlap = self.nr_blacklist & self.nr_whitelist
        if overlap:
            raise ValueError(f"NR black/whitelist overlap: {sorted(overlap)}")
        x2_overlap = self.x2_blacklist & self.x2_whitelist
        if x2_overlap:
            raise ValueError(f"X2 black/whitelist overlap: {sorted(x2_overlap)}")

    def to_dict(self) -> dict:
        return {
            "nr_blacklist": sorted(self.nr_blacklist),
            "nr_whitelist": sorted(self.nr_whitelist),
            "plmn_blacklist": sorted(self.plmn_blacklist),
            "x2_blacklist": sorted(self.x2_blacklist),
            "x2_whitelist": sorted(self.x2_whitelist),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ListState":
        return cls(
            nr_blacklist={tuple(p) for p in d["nr_blacklist"]},
            nr_whitelist={tuple(p) for p in d["nr_whitelist"]},
            plmn_blacklist=set(d["plmn_blacklist"]),
            x2_blacklist={tuple(p) for p in d["x2_blacklist"]},
            x2_whitelist={tuple(p) for p in d["x2_whitelist"]},
        )


class Nrt:
    """Per-cell ordered neighbor relation table with a hard capacity."""

    def __init__(self, owner: CellId, capacity: int = DEFAULT_NRT_CAPACITY) -> None:
        if capacity < 1:
            raise ValueError("NRT capacity must be positive")
        self.owner = owner
        self.capacity = capacity
        self.entries: list[NeighborRelation] = []

    def targets(self) -> set[int]:
        return {e.target.cell_db_id for e in self.entries}

    def get(self, target_db_id: int) -> Optional[NeighborRelation]:
        for e in self.entries:
            if e.target.cell_db_id == target_db_id:
                return e
        return None

    def is_full(self) -> bool:
        return len(self.entries) >= self.capacity

    def snapshot(self) -> NrtSnapshot:
        return NrtSnapshot(self.owner.cell_db_id, frozenset(self.targets()))

    def validate(self, lists: ListState) -> None:
        targets = [e.target.cell_db_id for e in self.entries]
        if len(targets) != len(set(targets)):
            raise ValueError(f"duplicate targets in NRT of {self.owner.cell_db_id}")
        if len(self.entries) > self.capacity:
            raise ValueError(f"NRT of {self.owner.cell_db_id} over capacity")
        for e in self.entries:
            if e.pair() in lists.nr_blacklist:
                raise ValueError(f"blacklisted pair {e.pair()} present in NRT")
            if e.target.plmn in lists.plmn_blacklist:
                raise ValueError(
                    f"blacklisted PLMN {e.target.plmn} present in NRT of {self.owner.cell_db_id}"
                )


def nrt_insert(
    nrt: Nrt,
    rel: NeighborRelation,
    lists: ListState,
    tracking: TrackingTables,
    run: int,
) -> str:
    """Append ``rel`` to ``nrt`` if policy admits it.

    Checks run in a fixed order: duplicate target, NR blacklist, PLMN
    blacklist, X2 peer blacklist, capacity.  On success one addition record is
    written and the whitelist flag is materialized onto the entry; on
    rejection the table and the log are untouched.
    """
    if rel.source.cell_db_id != nrt.owner.cell_db_id:
        raise ValueError("relation source does not match NRT owner")
    if rel.target.cell_db_id in nrt.targets():
        return REJECT_DUPLICATE
    if rel.pair() in lists.nr_blacklist:
        return REJECT_NR_BLACKLIST
    if rel.target.plmn in lists.plmn_blacklist:
        return REJECT_PLMN_BLACKLIST
    if rel.source.bs_id != rel.target.bs_id and lists.x2_blocked(rel.source.bs_id, rel.target.bs_id):
        return REJECT_X2_BLACKLIST
    if nrt.is_full():
        return REJECT_CAPACITY
    rel.no_remove = rel.pair() in lists.nr_whitelist
    rec = tracking.record_addition(rel, run, rel.created_by)
    rel.created_seq = rec.seq
    nrt.entries.append(rel)
    return OK


def nrt_remove(
    nrt: Nrt,
    target_db_id: int,
    removed_by: Actor,
    tracking: TrackingTables,
    run: int,
) -> str:
    """Remove the entry for ``target_db_id``.

    Whitelist-protected entries survive everything except an operator
    removal; the protected outcome leaves table and log untouched.
    """
    entry = nrt.get(target_db_id)
    if entry is None:
        return NOT_FOUND
    if entry.no_remove and removed_by is not Actor.OPERATOR:
        return PROTECTED
    nrt.entries.remove(entry)
    tracking.record_removal(entry, run, removed_by)
    return OK


def nrt_diff(before: NrtSnapshot, after: NrtSnapshot) -> tuple[list[int], list[int]]:
    """Targets added and removed between two snapshots of the same NRT."""
    if before.owner_db_id != after.owner_db_id:
        raise ValueError("snapshots belong to different owners")
    added = sorted(after.target_db_ids - before.target_db_ids)
    removed = sorted(before.target_db_ids - after.target_db_ids)
    return added, removed


def rebuild_nrt_from_tracking(
    owner: CellId,
    tracking: TrackingTables,
    cells: dict[int, CellId],
    lists: ListState,
    capacity: int = DEFAULT_NRT_CAPACITY,
) -> Nrt:
    """Replay the tracking log from an empty table.

    Produces the same entries, in the same order, as the live NRT that
    emitted the log.  Whitelist protection is a view over the current list
    state, so it is re-applied after replay rather than read from the log.
    """
    nrt = Nrt(owner, capacity)
    for rec in tracking.events_for_source(owner.cell_db_id):
        if rec.event == EVENT_ADD:
            target = cells[rec.target_db_id]
            rel = NeighborRelation(
                relation_db_id=rec.relation_db_id,
                source=owner,
                target=target,
                rel_type=rec.rel_type,
                created_by=rec.actor,
                created_at_run=rec.run,
                created_seq=rec.seq,
            )
            rel.no_remove = rel.pair() in lists.nr_whitelist
            nrt.entries.append(rel)
        else:
            entry = nrt.get(rec.target_db_id)
            if entry is not None:
                nrt.entries.remove(entry)
    return nrt


def relation_to_dict(rel: NeighborRelation) -> dict:
    return {
        "relation_db_id": rel.relation_db_id,
        "source_db_id": rel.source.cell_db_id,
        "target_db_id": rel.target.cell_db_id,
        "rel_type": rel.rel_type.value,
        "created_by": rel.created_by.value,
        "created_at_run": rel.created_at_run,
        "created_seq": rel.created_seq,
        "ho_allowed": rel.ho_allowed,
        "no_remove": rel.no_remove,
        "blacklisted": rel.blacklisted,
    }


def relation_from_dict(d: dict, cells: dict[int, CellId]) -> NeighborRelation:
    return NeighborRelation(
        relation_db_id=int(d["relation_db_id"]),
        source=cells[int(d["source_db_id"])],
        target=cells[int(d["target_db_id"])],
        rel_type=RelType(d["rel_type"]),
        created_by=Actor(d["created_by"]),
        created_at_run=int(d["created_at_run"]),
        created_seq=int(d["created_seq"]),
        ho_allowed=bool(d["ho_allowed"]),
        no_remove=bool(d["no_remove"]),
        blacklisted=bool(d["blacklisted"]),
    )
