"""Report emission over persisted campaign state.

Every report is a pure function of the campaign directory, so reports can be
regenerated offline at any time.  Distances are always printed with a decimal
point, two digits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .model import Actor, CellId, TrackingRecord, TrackingTables, distance_km
from .netsim import generate_topology
from .scenario import Scenario, ScenarioError, load_scenario


@dataclass(frozen=True)
class RemovalRow:
    """Per-cell summary of centrally removed relations, split by creator."""

    bs_id: int
    cell_db_id: int
    x2_removed: int
    danr_removed: int
    avg_distance_km: Optional[float]


def removal_report_rows(
    tracking: TrackingTables, cells: dict[int, CellId]
) -> list[RemovalRow]:
    """Count engine removals per cell, grouped by who created the relation.

    Only removals performed by the central engine count; the creator is
    resolved through the addition record carrying the same relation id.  The
    average distance covers the X2- and distributed-ANR-created removals of
    that cell.
    """
    creator_by_rel: dict[int, Actor] = {r.relation_db_id: r.actor for r in tracking.additions}
    grouped: dict[int, dict[str, list[float]]] = {}
    for rec in tracking.removals:
        if rec.actor is not Actor.HANR:
            continue
        creator = creator_by_rel.get(rec.relation_db_id)
        if creator not in (Actor.X2, Actor.DANR):
            continue
        dist = distance_km(cells[rec.source_db_id], cells[rec.target_db_id])
        bucket = grouped.setdefault(rec.source_db_id, {"X2": [], "DANR": []})
        bucket[creator.value].append(dist)

    rows = []
    for cid in sorted(cells, key=lambda c: (cells[c].bs_id, c)):
        bucket = grouped.get(cid, {"X2": [], "DANR": []})
        dists = bucket["X2"] + bucket["DANR"]
        rows.append(
            RemovalRow(
                bs_id=cells[cid].bs_id,
                cell_db_id=cid,
                x2_removed=len(bucket["X2"]),
                danr_removed=len(bucket["DANR"]),
                avg_distance_km=(sum(dists) / len(dists)) if dists else None,
            )
        )
    return rows


def render_removal_report(rows: list[RemovalRow]) -> str:
    lines = ["bs_id,cell_db_id,x2_removed,danr_removed,avg_distance_km"]
    for r in rows:
        x2 = str(r.x2_removed) if r.x2_removed else "-"
        danr = str(r.danr_removed) if r.danr_removed else "-"
        avg = f"{r.avg_distance_km:.2f}" if r.avg_distance_km is not None else "-"
        lines.append(f"{r.bs_id},{r.cell_db_id},{x2},{danr},{avg}")
    return "\n".join(lines)


def _latest_state(campaign_dir: Path) -> dict:
    state_dir = campaign_dir / "state"
    candidates = sorted(state_dir.glob("state_run_*.json")) if state_dir.exists() else []
    if not candidates:
        raise ScenarioError(f"no campaign state found under {campaign_dir}")
    return json.loads(candidates[-1].read_text())


def load_campaign(campaign_dir: str | Path) -> tuple[Scenario, dict]:
    campaign_dir = Path(campaign_dir)
    resolved = campaign_dir / "resolved_scenario.ini"
    if not resolved.exists():
        raise ScenarioError(f"not a campaign directory: {campaign_dir}")
    return load_scenario(resolved), _latest_state(campaign_dir)


def removal_report_for_campaign(campaign_dir: str | Path) -> str:
    scenario, state = load_campaign(campaign_dir)
    topology = generate_topology(scenario.topology, scenario.seed)
    tracking = TrackingTables.from_dict(state["engine"]["tracking"])
    return render_removal_report(removal_report_rows(tracking, topology.cells))


def thresholds_report_for_campaign(campaign_dir: str | Path) -> str:
    path = Path(campaign_dir) / "thresholds.csv"
    if not path.exists():
        raise ScenarioError(f"no thresholds.csv under {campaign_dir}")
    return path.read_text().rstrip("\n")


def cycles_report_for_campaign(campaign_dir: str | Path) -> str:
    path = Path(campaign_dir) / "cycle_reports.csv"
    if not path.exists():
        raise ScenarioError(f"no cycle_reports.csv under {campaign_dir}")
    return path.read_text().rstrip("\n")
