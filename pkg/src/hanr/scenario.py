"""Scenario configuration: sectioned key=value files with strict validation.

Unknown sections or keys are rejected (typo protection), missing keys fall
back to documented defaults, and the fully resolved configuration is echoed
into every campaign directory so each number used anywhere is inspectable.
A resolved file re-loads to an identical scenario.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .engine import DanrAttributes, EngineSchedule, PolicyParams
from .model import Rat
from .netsim import RadioModel, TopologyConfig, TrafficConfig


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    seed: int
    topology: TopologyConfig
    radio: RadioModel
    traffic: TrafficConfig
    schedule: EngineSchedule
    danr: DanrAttributes
    policy: PolicyParams
    plmn_blacklist: list[str] = field(default_factory=list)

    def validate(self) -> None:
        self.topology.validate()
        self.radio.validate()
        self.traffic.validate()
        self.schedule.validate()
        self.policy.resolved(self.schedule.observation_window_runs).validate()


def _bool(raw: str, where: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ScenarioError(f"{where}: expected a boolean, got {raw!r}")


def _int(raw: str, where: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ScenarioError(f"{where}: expected an integer, got {raw!r}") from exc


def _float(raw: str, where: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ScenarioError(f"{where}: expected a number, got {raw!r}") from exc


def _opt_int(raw: str, where: str) -> int | None:
    if raw.strip() == "":
        return None
    return _int(raw, where)


def _rat(raw: str, where: str) -> Rat:
    try:
        return Rat(raw.strip().upper())
    except ValueError as exc:
        raise ScenarioError(f"{where}: unknown RAT {raw!r}") from exc


def _plmn_list(raw: str, where: str) -> list[str]:
    return [p.strip() for p in raw.split(",") if p.strip()]


# section -> key -> (target object attribute, parser)
_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "campaign": {
        "seed": ("seed", _int),
        "plmn_blacklist": ("plmn_blacklist", _plmn_list),
    },
    "schedule": {
        "anr_run_time_s": ("anr_run_time_s", _float),
        "time_window_s": ("time_window_s", _float),
        "observation_window_runs": ("observation_window_runs", _int),
    },
    "topology": {
        "n_bs": ("n_bs", _int),
        "cells_per_bs": ("cells_per_bs", _int),
        "layout": ("layout", str),
        "bs_spacing_km": ("bs_spacing_km", _float),
        "bs_jitter_km": ("bs_jitter_km", _float),
        "freq_layers": ("freq_layers", _int),
        "plmn": ("plmn", str),
        "rat": ("rat", _rat),
        "tx_power_dbm": ("tx_power_dbm", _float),
        "overshooter_fraction": ("overshooter_fraction", _float),
        "overshooter_tx_bonus_db": ("overshooter_tx_bonus_db", _float),
    },
    "radio": {
        "pl0_db": ("pl0_db", _float),
        "ref_dist_km": ("ref_dist_km", _float),
        "path_loss_exponent": ("path_loss_exponent", _float),
        "shadowing_sigma_db": ("shadowing_sigma_db", _float),
        "noise_seed": ("noise_seed", _int),
    },
    "traffic": {
        "ues_per_cell": ("ues_per_cell", _int),
        "ue_radius_km": ("ue_radius_km", _float),
        "hysteresis_db": ("hysteresis_db", _float),
        "detect_floor_dbm": ("detect_floor_dbm", _float),
        "prep_success": ("prep_success", _float),
        "base_success": ("base_success", _float),
        "overshoot_d_scale_km": ("overshoot_d_scale_km", _float),
        "rsrq_sigma_db": ("rsrq_sigma_db", _float),
        "load_offset_db": ("load_offset_db", _float),
    },
    "danr": {
        "active": ("active", _bool),
        "cell_rsrp_thr_dbm": ("cell_rsrp_thr_dbm", _float),
        "cell_rsrq_thr_db": ("cell_rsrq_thr_db", _float),
        "ho_min_thr": ("ho_min_thr", _float),
        "rp_thr": ("rp_thr", _float),
        "rq_thr": ("rq_thr", _float),
        "ue_min_count": ("ue_min_count", _int),
        "removal_timer_runs": ("removal_timer_runs", _int),
    },
    "policy": {
        "nrt_capacity": ("nrt_capacity", _int),
        "n_repeat": ("n_repeat", _int),
        "whitelist_quantile": ("whitelist_quantile", _float),
        "whitelist_streak": ("whitelist_streak", _opt_int),
        "x2_attempt_limit": ("x2_attempt_limit", _int),
        "grace_runs": ("grace_runs", _opt_int),
        "removal_cap": ("removal_cap", _int),
        "cooldown_runs": ("cooldown_runs", _opt_int),
        "cusum_sensitivity": ("cusum_sensitivity", _float),
        "rebuild_k": ("rebuild_k", _int),
    },
}


def _section_objects(scenario: Scenario) -> dict[str, object]:
    return {
        "campaign": scenario,
        "schedule": scenario.schedule,
        "topology": scenario.topology,
        "radio": scenario.radio,
        "traffic": scenario.traffic,
        "danr": scenario.danr,
        "policy": scenario.policy,
    }


def default_scenario() -> Scenario:
    """All library defaults; the shipped scenario files override from here."""
    return Scenario(
        seed=42,
        topology=TopologyConfig(),
        radio=RadioModel(),
        traffic=TrafficConfig(),
        schedule=EngineSchedule(),
        danr=DanrAttributes(),
        policy=PolicyParams(),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ScenarioError(f"parse error in {path}: {exc}") from exc

    scenario = default_scenario()
    targets = _section_objects(scenario)
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ScenarioError(f"unknown section [{section}]")
        known = _SCHEMA[section]
        for key, raw in parser.items(section):
            if key not in known:
                raise ScenarioError(f"unknown key {key!r} in section [{section}]")
            attr, parse = known[key]
            where = f"[{section}] {key}"
            value = parse(raw, where) if parse in (_bool, _int, _float, _opt_int, _rat, _plmn_list) else parse(raw)
            setattr(targets[section], attr, value)
    scenario.validate()
    return scenario


def _emit_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, Rat):
        return value.value
    if isinstance(value, list):
        return ",".join(value)
    if value is None:
        return ""
    return str(value)


def resolved_scenario_text(scenario: Scenario) -> str:
    """Render the fully resolved configuration, derived defaults included."""
    resolved = scenario.policy.resolved(scenario.schedule.observation_window_runs)
    targets = _section_objects(scenario)
    targets["policy"] = resolved
    lines: list[str] = []
    for section in _SCHEMA:
        lines.append(f"[{section}]")
        for key, (attr, _) in _SCHEMA[section].items():
            lines.append(f"{key} = {_emit_value(getattr(targets[section], attr))}")
        lines.append("")
    return "\n".join(lines)


def write_resolved_scenario(scenario: Scenario, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(resolved_scenario_text(scenario))
