from __future__ import annotations

import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import pytest

import mnsim
from mnsim.config import AntennaConfig, antennas_to_element, apply_overrides, write_document
from mnsim.schema import parse_document

DATA = Path(mnsim.__file__).parent / "data" / "input_files"
FIXTURES = Path(__file__).parent / "fixtures"


@dataclass
class ScenarioFiles:
    sim: Path
    persons: Path
    antennas: Path
    map_wkt: Path
    map_xml: Path

    @property
    def map_paths(self) -> tuple[Path, Path]:
        return (self.map_wkt, self.map_xml)

    def run_args(self) -> tuple:
        return (self.sim, self.persons, self.antennas, self.map_paths)


def omni(antenna_id: int = 1, x: float = 200.0, y: float = 200.0, **kw: Any) -> AntennaConfig:
    """An omnidirectional cell that, by default, connects everywhere."""
    params = dict(
        antenna_id=antenna_id,
        mno_id=1,
        mno_name="MNO1",
        max_connections=1000,
        power_w=10.0,
        path_loss_exponent=3.0,
        cell_type="omnidirectional",
        min_strength_dbm=-300.0,
        min_dominance=0.0,
        dominance_midpoint_dbm=-70.0,
        dominance_steepness=0.2,
        x=x,
        y=y,
    )
    params.update(kw)
    return AntennaConfig(**params)


def _overridden(src: Path, dst: Path, overrides: dict[str, Any] | None) -> Path:
    root = parse_document(src).getroot()
    apply_overrides(root, overrides or {})
    write_document(root, dst)
    return dst


def make_scenario(
    directory: Path,
    sim: dict[str, Any] | None = None,
    persons: dict[str, Any] | None = None,
    antennas: list[AntennaConfig] | None = None,
    map_wkt: str | None = None,
    map_xml: dict[str, Any] | None = None,
) -> ScenarioFiles:
    """Shipped input files with overrides, written under ``directory``."""
    directory.mkdir(parents=True, exist_ok=True)
    files = ScenarioFiles(
        sim=_overridden(DATA / "simulation.xml", directory / "simulation.xml", sim),
        persons=_overridden(DATA / "persons.xml", directory / "persons.xml", persons),
        antennas=directory / "antennas.xml",
        map_wkt=directory / "map.wkt",
        map_xml=_overridden(DATA / "map.xml", directory / "map.xml", map_xml),
    )
    if antennas is None:
        shutil.copyfile(DATA / "antennas.xml", files.antennas)
    else:
        write_document(antennas_to_element(antennas), files.antennas)
    if map_wkt is None:
        shutil.copyfile(DATA / "map.wkt", files.map_wkt)
    else:
        files.map_wkt.write_text(map_wkt + "\n", encoding="utf-8")
    return files


@pytest.fixture
def shipped(tmp_path: Path) -> ScenarioFiles:
    return make_scenario(tmp_path / "inputs")
