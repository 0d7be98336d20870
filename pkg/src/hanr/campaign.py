"""Campaign execution: the run loop, persistence, resume, and replay.

Each run executes: traffic simulation (or replay ingestion), the distributed
ANR phase (timer removals, detection, X2 reciprocity), PM synthesis for
relations created after the measurement window, then one engine cycle.  All
state is persisted after every run, so a killed campaign resumes at the next
run with byte-identical outputs, and PM/report CSVs exported by a campaign
can be replayed through the engine without the simulator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import io as hio
from .danr import (
    DanrCellState,
    UeReport,
    danr_detect_and_add,
    danr_timer_removal,
    x2_reciprocal_add,
)
from .engine import CycleReport, HanrEngine
from .metrics import PmRunRecord
from .model import NeighborRelation
from .netsim import Topology, generate_topology, simulate_run
from .scenario import Scenario, ScenarioError, resolved_scenario_text

RunRecords = dict[int, dict[int, PmRunRecord]]
RunReports = dict[int, list[UeReport]]


class SimSource:
    """Generates run data from the synthetic network."""

    def __init__(self, topology: Topology, scenario: Scenario) -> None:
        self.topology = topology
        self.scenario = scenario

    def run_data(self, run: int, nrts) -> tuple[RunRecords, RunReports]:
        return simulate_run(
            self.topology,
            nrts,
            self.scenario.radio,
            self.scenario.traffic,
            self.scenario.seed,
            run,
        )


class CsvSource:
    """Feeds previously exported run data back through the engine."""

    def __init__(
        self,
        pm_by_run: dict[int, RunRecords],
        reports_by_run: dict[int, RunReports],
        cell_ids: list[int],
    ) -> None:
        self.pm_by_run = pm_by_run
        self.reports_by_run = reports_by_run
        self.cell_ids = cell_ids

    def run_data(self, run: int, nrts) -> tuple[RunRecords, RunReports]:
        records: RunRecords = {cid: {} for cid in self.cell_ids}
        for cid, recs in self.pm_by_run.get(run, {}).items():
            records[cid] = dict(recs)
        reports: RunReports = {cid: [] for cid in self.cell_ids}
        for cid, reps in self.reports_by_run.get(run, {}).items():
            reports[cid] = list(reps)
        return records, reports


@dataclass
class ExperimentOutputs:
    out_dir: Path
    runs_executed: int
    cycle_reports: list[CycleReport]
    engine: HanrEngine
    topology: Topology
    scenario: Scenario
    danr_states: dict[int, DanrCellState] = field(default_factory=dict)


class Campaign:
    def __init__(self, scenario: Scenario, out_dir: str | Path, source=None) -> None:
        scenario.validate()
        self.scenario = scenario
        self.out = Path(out_dir)
        self.topology = generate_topology(scenario.topology, scenario.seed)
        cells = self.topology.cells
        bs_ids = sorted({c.bs_id for c in cells.values()})
        attrs = {bs: replace(scenario.danr) for bs in bs_ids}
        self.engine = HanrEngine(
            cells,
            replace(scenario.schedule),
            scenario.policy,
            attrs,
            scenario.plmn_blacklist,
        )
        self.danr_states = {cid: DanrCellState() for cid in sorted(cells)}
        self.trajectories: list[list] = []  # [run, bs_id, rsrp_thr, rsrq_thr]
        self.cycle_reports: list[CycleReport] = []
        self.source = source if source is not None else SimSource(self.topology, scenario)

    # ------------------------------------------------------------------ paths

    def _state_path(self, run: int) -> Path:
        return self.out / "state" / f"state_run_{run:04d}.json"

    def _pm_path(self, run: int) -> Path:
        return self.out / "pm" / f"pm_run_{run:04d}.csv"

    def _ue_path(self, run: int) -> Path:
        return self.out / "ue" / f"ue_reports_run_{run:04d}.csv"

    def _cycle_path(self, run: int) -> Path:
        return self.out / "cycles" / f"cycle_run_{run:04d}.csv"

    def _nrt_path(self, run: int) -> Path:
        return self.out / "nrt" / f"nrt_run_{run:04d}.csv"

    # ------------------------------------------------------------------ lifecycle

    def _prepare(self) -> int:
        """Write or verify the resolved config; return the first run to execute."""
        self.out.mkdir(parents=True, exist_ok=True)
        resolved = resolved_scenario_text(self.scenario)
        marker = self.out / "resolved_scenario.ini"
        if marker.exists():
            if marker.read_text() != resolved:
                raise ScenarioError(
                    f"output directory {self.out} holds a different campaign"
                )
        else:
            marker.write_text(resolved)
        last = 0
        state_dir = self.out / "state"
        if state_dir.exists():
            for p in sorted(state_dir.glob("state_run_*.json")):
                last = max(last, int(p.stem.split("_")[-1]))
        if last > 0:
            self._load_state(last)
        return last + 1

    def _load_state(self, run: int) -> None:
        state = json.loads(self._state_path(run).read_text())
        self.engine.load_state(state["engine"])
        self.danr_states = {
            int(cid): DanrCellState.from_dict(d) for cid, d in state["danr"].items()
        }
        self.trajectories = state["trajectories"]

    def run(self, until_run: int | None = None) -> ExperimentOutputs:
        total = self.scenario.schedule.total_runs
        stop = total if until_run is None else min(until_run, total)
        start = self._prepare()
        for k in range(start, stop + 1):
            self._execute_run(k)
        return ExperimentOutputs(
            out_dir=self.out,
            runs_executed=max(start - 1, stop),
            cycle_reports=self.cycle_reports,
            engine=self.engine,
            topology=self.topology,
            scenario=self.scenario,
            danr_states=self.danr_states,
        )

    # ------------------------------------------------------------------ one run

    def _execute_run(self, run: int) -> None:
        records, reports = self.source.run_data(run, self.engine.nrts)
        added = self._danr_phase(run, records, reports)
        self._synthesize_records(run, records, reports, added)
        report = self.engine.run_cycle(records)
        self.cycle_reports.append(report)
        for bs in self.engine.bs_ids:
            attrs = self.engine.attrs[bs]
            self.trajectories.append(
                [run, bs, attrs.cell_rsrp_thr_dbm, attrs.cell_rsrq_thr_db]
            )
        self._persist_run(run, records, reports, report)

    def _danr_phase(self, run: int, records: RunRecords, reports: RunReports) -> list[NeighborRelation]:
        engine = self.engine
        added: list[NeighborRelation] = []
        for cid in engine._cell_order():
            cell = engine.cells[cid]
            attrs = engine.attrs[cell.bs_id]
            if not attrs.active:
                continue
            danr_timer_removal(
                cell,
                self.danr_states[cid],
                records.get(cid, {}),
                attrs,
                engine.nrts[cid],
                engine.tracking,
                run,
            )
            fresh, _rejected = danr_detect_and_add(
                cell,
                reports.get(cid, []),
                attrs,
                engine.nrts[cid],
                engine.lists,
                engine.tracking,
                engine.ids,
                engine.cells,
                run,
            )
            added.extend(fresh)
        for rel in list(added):
            if rel.source.bs_id != rel.target.bs_id:
                _, reverse = x2_reciprocal_add(
                    rel,
                    engine.nrts,
                    engine.lists,
                    engine.tracking,
                    engine.ids,
                    engine.x2_attempts,
                    run,
                )
                if reverse is not None:
                    added.append(reverse)
        return added

    def _synthesize_records(
        self,
        run: int,
        records: RunRecords,
        reports: RunReports,
        added: list[NeighborRelation],
    ) -> None:
        """Give relations created after the measurement window a PM row.

        Their signal samples are exactly the UE reports that triggered the
        addition; counters are zero because no handover could have targeted
        them during the window.  Replayed data already contains these rows,
        in which case nothing is synthesized.
        """
        for rel in added:
            src, tgt = rel.pair()
            cell_recs = records.setdefault(src, {})
            if tgt in cell_recs:
                continue
            pair_reports = [r for r in reports.get(src, []) if r.target_db_id == tgt]
            cell_recs[tgt] = PmRunRecord(
                run=run,
                source_db_id=src,
                target_db_id=tgt,
                rsrp_samples=[r.rsrp_dbm for r in pair_reports],
                rsrq_samples=[r.rsrq_db for r in pair_reports],
            )

    # ------------------------------------------------------------------ persistence

    def _persist_run(
        self, run: int, records: RunRecords, reports: RunReports, report: CycleReport
    ) -> None:
        hio.write_pm_records(self._pm_path(run), records)
        hio.write_ue_reports(self._ue_path(run), run, reports)
        hio.write_cycle_report(self._cycle_path(run), report)
        hio.write_nrt_snapshot(self._nrt_path(run), self.engine.nrts)
        state = {
            "run_completed": run,
            "engine": self.engine.to_dict(),
            "danr": {str(cid): st.to_dict() for cid, st in sorted(self.danr_states.items())},
            "trajectories": self.trajectories,
        }
        path = self._state_path(run)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(state, sort_keys=True, indent=1))
        # Combined views, regenerated so a resumed campaign stays consistent.
        hio.write_tracking_log(self.out / "tracking.csv", self.engine.tracking.all_events())
        hio.write_thresholds(self.out / "thresholds.csv", self.trajectories)
        runs = list(range(1, run + 1))
        hio.concat_csv([self._pm_path(k) for k in runs], self.out / "pm_records.csv")
        hio.concat_csv([self._ue_path(k) for k in runs], self.out / "ue_reports.csv")
        hio.concat_csv([self._cycle_path(k) for k in runs], self.out / "cycle_reports.csv")


def run_experiment(
    scenario: Scenario, out_dir: str | Path, until_run: int | None = None
) -> ExperimentOutputs:
    """Execute (or resume) a simulated campaign."""
    return Campaign(scenario, out_dir).run(until_run=until_run)


def replay_experiment(
    scenario: Scenario, pm_csv: str | Path, out_dir: str | Path
) -> ExperimentOutputs:
    """Re-run the engine over exported PM records without the simulator.

    The UE report stream (``ue_reports.csv`` next to the PM file) drives the
    distributed-ANR phase; without it only centrally created relations evolve.
    """
    pm_csv = Path(pm_csv)
    if not pm_csv.exists():
        raise ScenarioError(f"PM record file not found: {pm_csv}")
    pm_by_run = hio.read_pm_records(pm_csv)
    reports_path = pm_csv.parent / "ue_reports.csv"
    reports_by_run = hio.read_ue_reports(reports_path) if reports_path.exists() else {}
    recorded = set(pm_by_run) | set(reports_by_run)
    if not recorded:
        raise ScenarioError(f"no runs found in {pm_csv}")
    topology = generate_topology(scenario.topology, scenario.seed)
    source = CsvSource(pm_by_run, reports_by_run, sorted(topology.cells))
    return Campaign(scenario, out_dir, source=source).run(until_run=max(recorded))
