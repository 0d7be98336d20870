"""Deterministic synthetic network: topology, propagation, traffic, PM counters.

A run is a pure function of (seed, run index): the per-run RNG stream is
derived from both, and the draw order is part of the contract so new features
cannot silently shift existing draws.  Per run the stream is consumed in
three phases:

1. UE placement, one disk draw per UE, cells in ascending cell-id order;
2. measurement noise, per serving cell one shadowing matrix then one RSRQ
   noise matrix (UEs x all cells);
3. handover outcomes, per serving cell, per UE: one preparation draw, then
   one execution draw only if preparation succeeded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .danr import UeReport
from .metrics import PmRunRecord
from .model import CellId, Nrt, Rat, distance_km


@dataclass
class TopologyConfig:
    n_bs: int = 4
    cells_per_bs: int = 6
    layout: str = "grid"  # "grid" | "line"
    bs_spacing_km: float = 7.0
    bs_jitter_km: float = 0.0
    freq_layers: int = 2
    plmn: str = "00101"
    rat: Rat = Rat.EUTRAN
    tx_power_dbm: float = 46.0
    overshooter_fraction: float = 0.0
    overshooter_tx_bonus_db: float = 13.0

    def validate(self) -> None:
        if self.n_bs < 1:
            raise ValueError("topology needs at least one BS")
        if not (1 <= self.cells_per_bs <= 6):
            raise ValueError("cells_per_bs must be within 1..6")
        if self.layout not in ("grid", "line"):
            raise ValueError("layout must be 'grid' or 'line'")
        if self.freq_layers < 1 or self.freq_layers > self.cells_per_bs:
            raise ValueError("freq_layers must be within 1..cells_per_bs")
        if not (0.0 <= self.overshooter_fraction <= 1.0):
            raise ValueError("overshooter_fraction must be within [0,1]")


@dataclass
class RadioModel:
    """Log-distance path loss with lognormal shadowing."""

    pl0_db: float = 97.0
    ref_dist_km: float = 0.1
    path_loss_exponent: float = 3.8
    shadowing_sigma_db: float = 1.0
    noise_seed: int = 0

    def validate(self) -> None:
        if self.path_loss_exponent <= 0:
            raise ValueError("path loss exponent must be positive")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing sigma must be >= 0")
        if self.ref_dist_km <= 0:
            raise ValueError("reference distance must be positive")


@dataclass
class TrafficConfig:
    ues_per_cell: int = 20
    ue_radius_km: float = 0.4
    hysteresis_db: float = 2.0
    detect_floor_dbm: float = -125.0
    prep_success: float = 0.98
    base_success: float = 0.95
    overshoot_d_scale_km: float = 3.0
    rsrq_sigma_db: float = 0.5
    load_offset_db: float = 0.0

    def validate(self) -> None:
        if self.ues_per_cell < 0:
            raise ValueError("ues_per_cell must be >= 0")
        for name in ("prep_success", "base_success"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be a probability")


@dataclass(frozen=True)
class SimCell:
    cell: CellId
    tx_power_dbm: float
    overshooter: bool


@dataclass
class Topology:
    bs_positions: dict[int, tuple[float, float]]
    sim_cells: list[SimCell]  # ascending cell_db_id

    @property
    def cells(self) -> dict[int, CellId]:
        return {sc.cell.cell_db_id: sc.cell for sc in self.sim_cells}

    def sim_cell(self, cell_db_id: int) -> SimCell:
        for sc in self.sim_cells:
            if sc.cell.cell_db_id == cell_db_id:
                return sc
        raise KeyError(cell_db_id)


def generate_topology(config: TopologyConfig, seed: int) -> Topology:
    """Build the grid of co-sited cells; only the over-shooter pick and the
    optional position jitter consume randomness."""
    config.validate()
    rng = np.random.default_rng([abs(seed), 0x7073])
    side = math.ceil(math.sqrt(config.n_bs))
    bs_positions: dict[int, tuple[float, float]] = {}
    for i in range(config.n_bs):
        if config.layout == "line":
            x, y = i * config.bs_spacing_km, 0.0
        else:
            x = (i % side) * config.bs_spacing_km
            y = (i // side) * config.bs_spacing_km
        if config.bs_jitter_km > 0:
            jx, jy = rng.uniform(-config.bs_jitter_km, config.bs_jitter_km, size=2)
            x, y = x + float(jx), y + float(jy)
        bs_positions[i + 1] = (x, y)

    n_cells = config.n_bs * config.cells_per_bs
    n_over = math.floor(config.overshooter_fraction * n_cells)
    over_idx = set()
    if n_over > 0:
        over_idx = set(int(i) for i in rng.choice(n_cells, size=n_over, replace=False))

    sim_cells: list[SimCell] = []
    idx = 0
    for bs_id in sorted(bs_positions):
        for c in range(config.cells_per_bs):
            layer = c * config.freq_layers // config.cells_per_bs
            cell = CellId(
                bs_id=bs_id,
                cell_db_id=bs_id * 10 + c + 1,
                plmn=config.plmn,
                rat=config.rat,
                freq_layer=layer,
                position=bs_positions[bs_id],
            )
            overshooter = idx in over_idx
            tx = config.tx_power_dbm + (config.overshooter_tx_bonus_db if overshooter else 0.0)
            sim_cells.append(SimCell(cell=cell, tx_power_dbm=tx, overshooter=overshooter))
            idx += 1
    return Topology(bs_positions=bs_positions, sim_cells=sim_cells)


def path_loss_db(dist_km: float, model: RadioModel) -> float:
    d = max(dist_km, model.ref_dist_km)
    return model.pl0_db + 10.0 * model.path_loss_exponent * math.log10(d / model.ref_dist_km)


def rsrp_at(
    cell: SimCell,
    point: tuple[float, float],
    model: RadioModel,
    rng: np.random.Generator,
) -> float:
    """Received power at a point: tx - path loss - shadowing draw."""
    d = math.hypot(point[0] - cell.cell.position[0], point[1] - cell.cell.position[1])
    shadow = float(rng.normal(0.0, model.shadowing_sigma_db)) if model.shadowing_sigma_db > 0 else 0.0
    return cell.tx_power_dbm - path_loss_db(d, model) - shadow


def _rsrq_from_rsrp(rsrp: np.ndarray, noise: np.ndarray, traffic: TrafficConfig) -> np.ndarray:
    # Quality tracks power over the reporting range, shifted by cell load.
    raw = -19.5 + 16.0 * (rsrp + 140.0) / 97.0 + traffic.load_offset_db + noise
    return np.clip(raw, -19.5, -3.0)


def run_rng(seed: int, model: RadioModel, run_index: int) -> np.random.Generator:
    return np.random.default_rng([abs(seed), abs(model.noise_seed), run_index])


def simulate_run(
    topology: Topology,
    nrts: dict[int, Nrt],
    model: RadioModel,
    traffic: TrafficConfig,
    seed: int,
    run_index: int,
) -> tuple[dict[int, dict[int, PmRunRecord]], dict[int, list[UeReport]]]:
    """One run window: place UEs, measure, hand over, aggregate counters.

    Returns per-cell PM records for every current table member and the UE
    report stream (same-layer non-members above the detection floor) that
    feeds neighbor detection.
    """
    if run_index < 1:
        raise ValueError("run_index starts at 1")
    model.validate()
    traffic.validate()
    rng = run_rng(seed, model, run_index)
    cells = topology.sim_cells
    n_cells = len(cells)
    cell_pos = np.array([sc.cell.position for sc in cells])
    tx = np.array([sc.tx_power_dbm for sc in cells])
    n_ue = traffic.ues_per_cell

    # Phase 1: UE placement, uniform in a disk around each serving cell.
    placements: dict[int, np.ndarray] = {}
    for sc in cells:
        r = traffic.ue_radius_km * np.sqrt(rng.random(n_ue))
        theta = 2.0 * math.pi * rng.random(n_ue)
        placements[sc.cell.cell_db_id] = np.column_stack(
            [
                sc.cell.position[0] + r * np.cos(theta),
                sc.cell.position[1] + r * np.sin(theta),
            ]
        )

    # Phase 2: per serving cell, a (UE x cell) RSRP matrix with shadowing,
    # then the matching RSRQ noise matrix.
    rsrp_maps: dict[int, np.ndarray] = {}
    rsrq_maps: dict[int, np.ndarray] = {}
    for sc in cells:
        pts = placements[sc.cell.cell_db_id]
        if n_ue == 0:
            rsrp_maps[sc.cell.cell_db_id] = np.zeros((0, n_cells))
            rsrq_maps[sc.cell.cell_db_id] = np.zeros((0, n_cells))
            continue
        d = np.hypot(
            pts[:, None, 0] - cell_pos[None, :, 0], pts[:, None, 1] - cell_pos[None, :, 1]
        )
        d = np.maximum(d, model.ref_dist_km)
        pl = model.pl0_db + 10.0 * model.path_loss_exponent * np.log10(d / model.ref_dist_km)
        shadow = (
            rng.normal(0.0, model.shadowing_sigma_db, size=d.shape)
            if model.shadowing_sigma_db > 0
            else np.zeros(d.shape)
        )
        rsrp = tx[None, :] - pl - shadow
        qnoise = (
            rng.normal(0.0, traffic.rsrq_sigma_db, size=d.shape)
            if traffic.rsrq_sigma_db > 0
            else np.zeros(d.shape)
        )
        rsrp_maps[sc.cell.cell_db_id] = rsrp
        rsrq_maps[sc.cell.cell_db_id] = _rsrq_from_rsrp(rsrp, qnoise, traffic)

    # Phase 3: handover preparation/execution toward the strongest member
    # neighbor on the serving layer, then counter aggregation.
    index_of = {sc.cell.cell_db_id: i for i, sc in enumerate(cells)}
    records: dict[int, dict[int, PmRunRecord]] = {}
    reports: dict[int, list[UeReport]] = {}
    for sc in cells:
        cid = sc.cell.cell_db_id
        serving_idx = index_of[cid]
        nrt = nrts[cid]
        members = sorted(nrt.targets())
        recs = {
            t: PmRunRecord(run=run_index, source_db_id=cid, target_db_id=t) for t in members
        }
        cell_reports: list[UeReport] = []
        rsrp = rsrp_maps[cid]
        rsrq = rsrq_maps[cid]

        # Samples for members, reports for detectable same-layer outsiders.
        if n_ue > 0:
            for j, other in enumerate(cells):
                oid = other.cell.cell_db_id
                if oid == cid:
                    continue
                is_member = oid in recs
                same_layer = (
                    other.cell.freq_layer == sc.cell.freq_layer
                    and other.cell.rat is sc.cell.rat
                )
                if not is_member and not same_layer:
                    continue
                col = rsrp[:, j]
                visible = np.nonzero(col >= traffic.detect_floor_dbm)[0]
                if visible.size == 0:
                    continue
                qcol = rsrq[:, j]
                if is_member:
                    recs[oid].rsrp_samples.extend(float(col[u]) for u in visible)
                    recs[oid].rsrq_samples.extend(float(qcol[u]) for u in visible)
                else:
                    cell_reports.extend(
                        UeReport(int(u), oid, float(col[u]), float(qcol[u])) for u in visible
                    )

        # Handover attempts toward the strongest member on the serving layer.
        ho_eligible = [
            t
            for t in members
            if nrt.get(t).ho_allowed
            and topology.cells[t].freq_layer == sc.cell.freq_layer
            and topology.cells[t].rat is sc.cell.rat
        ]
        if ho_eligible and n_ue > 0:
            sub = rsrp[:, [index_of[t] for t in ho_eligible]]
            sub = np.where(sub >= traffic.detect_floor_dbm, sub, -np.inf)
            best_pos = np.argmax(sub, axis=1)
            best_level = sub[np.arange(n_ue), best_pos]
            serving_level = rsrp[:, serving_idx]
            for u in range(n_ue):
                if not math.isfinite(best_level[u]):
                    continue
                if best_level[u] <= serving_level[u] + traffic.hysteresis_db:
                    continue
                rec = recs[ho_eligible[int(best_pos[u])]]
                rec.ap_ho += 1
                if float(rng.random()) < traffic.prep_success:
                    rec.sp_ho += 1
                    rec.a_ho += 1
                    target_sc = topology.sim_cell(rec.target_db_id)
                    p_exec = traffic.base_success
                    if target_sc.overshooter:
                        d_km = distance_km(sc.cell, target_sc.cell)
                        p_exec *= math.exp(-d_km / traffic.overshoot_d_scale_km)
                    if float(rng.random()) < p_exec:
                        rec.s_ho += 1

        for rec in recs.values():
            rec.validate()
        records[cid] = recs
        reports[cid] = cell_reports
    return records, reports
