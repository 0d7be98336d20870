"""Per-run PM counter aggregation and the normalized metric pipeline.

Five per-run quantities feed the ranking of a relation r at run i:

* share of source-cell handover successes going to r:  ``s_ho / sum(s_ho)``
* handover execution success rate:                     ``s_ho / a_ho``
* handover preparation success rate:                   ``sp_ho / ap_ho``
* normalized received power / quality: the per-run mean measurement mapped
  onto the non-negative reporting index and divided by the largest index of
  any relation that was measured this run.

All outputs lie in [0, 1], zero denominators yield 0 (idle relations are
biased toward removal), and everything is a pure function of the persisted
per-run records so recomputation after a replay is bit-identical.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .model import CellId, Nrt, distance_km

# Reporting-index ranges used to map dBm / dB measurements onto non-negative
# integers so that division preserves ordering (raw negative dBm would not).
RSRP_INDEX_MAX = 97
RSRQ_INDEX_MAX = 34

WINDOW_METRICS = ("ns_ho", "rs_ho", "ps_ho", "nrsrp", "nrsrq")

DEFAULT_WINDOW_RUNS = 10


def rsrp_index(dbm: float) -> int:
    """Map dBm onto the 0..97 reporting range (−140 dBm -> 0)."""
    return min(max(round(dbm + 140.0), 0), RSRP_INDEX_MAX)


def rsrq_index(db: float) -> int:
    """Map dB onto the 0..34 reporting range (−19.5 dB -> 0, half-dB steps)."""
    return min(max(round(2.0 * (db + 19.5)), 0), RSRQ_INDEX_MAX)


@dataclass
class PmRunRecord:
    """PM counters and signal samples for one relation over one run window.

    Counter chain: ``s_ho <= a_ho <= sp_ho <= ap_ho`` (an execution attempt
    requires a successful preparation).
    """

    run: int
    source_db_id: int
    target_db_id: int
    s_ho: int = 0
    a_ho: int = 0
    sp_ho: int = 0
    ap_ho: int = 0
    rsrp_samples: list[float] = field(default_factory=list)
    rsrq_samples: list[float] = field(default_factory=list)

    def validate(self) -> None:
        if not (0 <= self.s_ho <= self.a_ho <= self.sp_ho <= self.ap_ho):
            raise ValueError(
                f"counter chain violated for ({self.source_db_id},{self.target_db_id}) "
                f"run {self.run}: s={self.s_ho} a={self.a_ho} sp={self.sp_ho} ap={self.ap_ho}"
            )

    @property
    def n_samples(self) -> int:
        return len(self.rsrp_samples)

    def mean_rsrp_dbm(self) -> float | None:
        if not self.rsrp_samples:
            return None
        return math.fsum(self.rsrp_samples) / len(self.rsrp_samples)

    def mean_rsrq_db(self) -> float | None:
        if not self.rsrq_samples:
            return None
        return math.fsum(self.rsrq_samples) / len(self.rsrq_samples)


def normalized_success_share(records: Iterable[PmRunRecord]) -> dict[int, float]:
    """Per-relation share of the source cell's successful handovers this run.

    Shares sum to 1 whenever any handover succeeded; with zero total traffic
    every share is 0 by convention.
    """
    recs = list(records)
    total = sum(r.s_ho for r in recs)
    if total == 0:
        return {r.target_db_id: 0.0 for r in recs}
    return {r.target_db_id: r.s_ho / total for r in recs}


def relative_success(record: PmRunRecord) -> float:
    """Execution success rate; 0 when nothing was attempted."""
    if record.a_ho == 0:
        return 0.0
    return record.s_ho / record.a_ho


def prep_success(record: PmRunRecord) -> float:
    """Preparation success rate; 0 when nothing was attempted."""
    if record.ap_ho == 0:
        return 0.0
    return record.sp_ho / record.ap_ho


def normalized_signal(records: Iterable[PmRunRecord], metric: str = "rsrp") -> dict[int, float]:
    """Per-relation normalized signal level for one run.

    The per-run mean of the samples is mapped onto the reporting index and
    divided by the maximum index among relations with at least one sample
    this run, so the best-measured relation scores exactly 1.0.  Relations
    without samples (and everyone, if nobody was measured or every mean maps
    to index 0) score 0.
    """
    if metric == "rsrp":
        to_index = rsrp_index
        take_mean = PmRunRecord.mean_rsrp_dbm
    elif metric == "rsrq":
        to_index = rsrq_index
        take_mean = PmRunRecord.mean_rsrq_db
    else:
        raise ValueError(f"unknown signal metric {metric!r}")

    recs = list(records)
    indices: dict[int, int | None] = {}
    for r in recs:
        mean = take_mean(r)
        indices[r.target_db_id] = None if mean is None else to_index(mean)

    measured = [idx for idx in indices.values() if idx is not None]
    max_index = max(measured) if measured else 0
    if max_index == 0:
        return {t: 0.0 for t in indices}
    return {t: (0.0 if idx is None else idx / max_index) for t, idx in indices.items()}


def normalized_distances(nrt: Nrt) -> dict[int, float]:
    """Distance of each entry divided by the farthest entry's distance.

    Co-located tables (max distance 0) normalize to all zeros.
    """
    if not nrt.entries:
        raise ValueError("normalized distance is undefined for an empty NRT")
    dists = {e.target.cell_db_id: distance_km(nrt.owner, e.target) for e in nrt.entries}
    max_dist = max(dists.values())
    if max_dist == 0.0:
        return {t: 0.0 for t in dists}
    return {t: d / max_dist for t, d in dists.items()}


class MetricWindow:
    """Sliding window of the last W per-run normalized values per relation.

    Values are pushed once per observed run; relations missing from a run
    (removed from the table mid-campaign) simply have a gap, so the window
    always averages the most recent W observations that exist.
    """

    def __init__(self, w: int = DEFAULT_WINDOW_RUNS) -> None:
        if w < 1:
            raise ValueError("window size must be >= 1")
        self.w = w
        self._values: dict[int, dict[str, deque[float]]] = {}

    def push_run(
        self,
        target_db_id: int,
        ns_ho: float,
        rs_ho: float,
        ps_ho: float,
        nrsrp: float,
        nrsrq: float,
    ) -> None:
        values = {"ns_ho": ns_ho, "rs_ho": rs_ho, "ps_ho": ps_ho, "nrsrp": nrsrp, "nrsrq": nrsrq}
        for name, v in values.items():
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0,1] for target {target_db_id}")
        bufs = self._values.setdefault(
            target_db_id, {m: deque(maxlen=self.w) for m in WINDOW_METRICS}
        )
        for name, v in values.items():
            bufs[name].append(v)

    def has_data(self, target_db_id: int) -> bool:
        return target_db_id in self._values

    def runs_stored(self, target_db_id: int) -> int:
        if target_db_id not in self._values:
            return 0
        return len(self._values[target_db_id]["ns_ho"])

    def average(self, target_db_id: int, metric: str) -> float:
        """Mean of the stored per-run values; raises when nothing is stored."""
        if metric not in WINDOW_METRICS:
            raise ValueError(f"unknown window metric {metric!r}")
        bufs = self._values.get(target_db_id)
        if bufs is None or not bufs[metric]:
            raise LookupError(f"no stored runs for target {target_db_id}")
        buf = bufs[metric]
        # Clamp: the mean of in-range values can overshoot 1.0 by an ulp.
        return min(1.0, max(0.0, math.fsum(buf) / len(buf)))

    def average_or_zero(self, target_db_id: int, metric: str) -> float:
        try:
            return self.average(target_db_id, metric)
        except LookupError:
            return 0.0

    def to_dict(self) -> dict:
        return {
            str(t): {m: list(bufs[m]) for m in WINDOW_METRICS}
            for t, bufs in sorted(self._values.items())
        }

    @classmethod
    def from_dict(cls, d: dict, w: int) -> "MetricWindow":
        win = cls(w)
        for t, metrics in d.items():
            win._values[int(t)] = {
                m: deque(metrics[m], maxlen=w) for m in WINDOW_METRICS
            }
        return win


def ingest_run(
    window: MetricWindow,
    records: Iterable[PmRunRecord],
) -> None:
    """Push one run of records for a single source cell into its window."""
    recs = sorted(records, key=lambda r: r.target_db_id)
    for r in recs:
        r.validate()
    shares = normalized_success_share(recs)
    nrsrp = normalized_signal(recs, "rsrp")
    nrsrq = normalized_signal(recs, "rsrq")
    for r in recs:
        window.push_run(
            r.target_db_id,
            ns_ho=shares[r.target_db_id],
            rs_ho=relative_success(r),
            ps_ho=prep_success(r),
            nrsrp=nrsrp[r.target_db_id],
            nrsrq=nrsrq[r.target_db_id],
        )
