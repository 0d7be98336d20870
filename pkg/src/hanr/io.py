"""External CSV formats: table snapshots, tracking log, PM records, reports.

Floats are written with ``repr`` so every file round-trips bit-exactly and
two runs of the same campaign produce byte-identical artifacts.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

from .danr import UeReport
from .engine import CycleAction, CycleReport
from .metrics import PmRunRecord
from .model import Nrt, TrackingRecord

NRT_HEADER = [
    "source_db_id",
    "target_db_id",
    "relation_db_id",
    "type",
    "created_by",
    "created_at_run",
    "ho_allowed",
    "no_remove",
]
TRACKING_HEADER = [
    "source_db_id",
    "target_db_id",
    "relation_db_id",
    "type",
    "run",
    "seq",
    "event",
    "actor",
]
PM_HEADER = [
    "run",
    "source_db_id",
    "target_db_id",
    "s_ho",
    "a_ho",
    "sp_ho",
    "ap_ho",
    "mean_rsrp_dbm",
    "rsrq_mean_db",
    "n_samples",
]
UE_REPORT_HEADER = ["run", "serving_db_id", "target_db_id", "ue_id", "rsrp_dbm", "rsrq_db"]
CYCLE_HEADER = ["run", "bs_id", "cell_db_id", "action", "target_db_id", "reason", "rank_at_action"]
THRESHOLD_HEADER = ["run", "bs_id", "cell_rsrp_thr_dbm", "cell_rsrq_thr_db"]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(path: Path, header: list[str], rows: Iterable[Iterable]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_nrt_snapshot(path: Path, nrts: dict[int, Nrt]) -> None:
    rows = []
    for cid in sorted(nrts):
        for e in nrts[cid].entries:
            rows.append(
                [
                    e.source.cell_db_id,
                    e.target.cell_db_id,
                    e.relation_db_id,
                    e.rel_type.value,
                    e.created_by.value,
                    e.created_at_run,
                    e.ho_allowed,
                    e.no_remove,
                ]
            )
    _write_rows(path, NRT_HEADER, rows)


def write_tracking_log(path: Path, records: Iterable[TrackingRecord]) -> None:
    rows = [
        [
            r.source_db_id,
            r.target_db_id,
            r.relation_db_id,
            r.rel_type.value,
            r.run,
            r.seq,
            r.event,
            r.actor.value,
        ]
        for r in sorted(records, key=lambda r: r.seq)
    ]
    _write_rows(path, TRACKING_HEADER, rows)


def write_pm_records(path: Path, records: dict[int, dict[int, PmRunRecord]]) -> None:
    rows = []
    for cid in sorted(records):
        for t in sorted(records[cid]):
            r = records[cid][t]
            rows.append(
                [
                    r.run,
                    r.source_db_id,
                    r.target_db_id,
                    r.s_ho,
                    r.a_ho,
                    r.sp_ho,
                    r.ap_ho,
                    r.mean_rsrp_dbm(),
                    r.mean_rsrq_db(),
                    r.n_samples,
                ]
            )
    _write_rows(path, PM_HEADER, rows)


def read_pm_records(path: Path) -> dict[int, dict[int, dict[int, PmRunRecord]]]:
    """Load exported PM rows keyed run -> source -> target.

    The per-run mean is re-wrapped as a single sample, which reproduces the
    original mean bit-exactly.
    """
    by_run: dict[int, dict[int, dict[int, PmRunRecord]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            run = int(row["run"])
            rec = PmRunRecord(
                run=run,
                source_db_id=int(row["source_db_id"]),
                target_db_id=int(row["target_db_id"]),
                s_ho=int(row["s_ho"]),
                a_ho=int(row["a_ho"]),
                sp_ho=int(row["sp_ho"]),
                ap_ho=int(row["ap_ho"]),
                rsrp_samples=[float(row["mean_rsrp_dbm"])] if row["mean_rsrp_dbm"] else [],
                rsrq_samples=[float(row["rsrq_mean_db"])] if row["rsrq_mean_db"] else [],
            )
            by_run.setdefault(run, {}).setdefault(rec.source_db_id, {})[rec.target_db_id] = rec
    return by_run


def write_ue_reports(path: Path, run: int, reports: dict[int, list[UeReport]]) -> None:
    rows = []
    for cid in sorted(reports):
        for rep in reports[cid]:
            rows.append([run, cid, rep.target_db_id, rep.ue_id, rep.rsrp_dbm, rep.rsrq_db])
    _write_rows(path, UE_REPORT_HEADER, rows)


def read_ue_reports(path: Path) -> dict[int, dict[int, list[UeReport]]]:
    by_run: dict[int, dict[int, list[UeReport]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            run = int(row["run"])
            rep = UeReport(
                ue_id=int(row["ue_id"]),
                target_db_id=int(row["target_db_id"]),
                rsrp_dbm=float(row["rsrp_dbm"]),
                rsrq_db=float(row["rsrq_db"]),
            )
            by_run.setdefault(run, {}).setdefault(int(row["serving_db_id"]), []).append(rep)
    return by_run


def cycle_rows(report: CycleReport) -> list[list]:
    return [
        [a.run, a.bs_id, a.cell_db_id, a.action, a.target_db_id, a.reason, a.rank_at_action]
        for a in report.actions
    ]


def write_cycle_report(path: Path, report: CycleReport) -> None:
    _write_rows(path, CYCLE_HEADER, cycle_rows(report))


def write_cycle_reports(path: Path, reports: Iterable[CycleReport]) -> None:
    rows: list[list] = []
    for rep in reports:
        rows.extend(cycle_rows(rep))
    _write_rows(path, CYCLE_HEADER, rows)


def write_thresholds(path: Path, rows: Iterable[tuple[int, int, float, float]]) -> None:
    _write_rows(path, THRESHOLD_HEADER, rows)


def concat_csv(paths: list[Path], out: Path) -> None:
    """Concatenate per-run CSVs that share a header into one file."""
    out.parent.mkdir(parents=True, exist_ok=True)
    header_written = False
    with open(out, "w", newline="") as dst:
        for p in paths:
            with open(p, newline="") as src:
                lines = src.read().splitlines()
            if not lines:
                continue
            if not header_written:
                dst.write(lines[0] + "\n")
                header_written = True
            for line in lines[1:]:
                dst.write(line + "\n")
