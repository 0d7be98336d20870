from pathlib import Path

import pytest

from hanr.model import CellId, Rat

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def make_cell(
    bs_id: int,
    cell_db_id: int,
    layer: int = 0,
    pos: tuple[float, float] = (0.0, 0.0),
    plmn: str = "00101",
    rat: Rat = Rat.EUTRAN,
) -> CellId:
    return CellId(
        bs_id=bs_id,
        cell_db_id=cell_db_id,
        plmn=plmn,
        rat=rat,
        freq_layer=layer,
        position=pos,
    )


@pytest.fixture
def default_scenario_path() -> Path:
    return SCENARIO_DIR / "default.ini"
