"""In-process simulation run: configs in, the full set of output files out."""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from mnsim import __version__
from mnsim.config import (
    AntennaConfig,
    ConfigValidationError,
    MapSpec,
    PersonsConfig,
    SimulationConfig,
    file_digest,
    parse_antennas_config,
    parse_map,
    parse_persons_config,
    parse_simulation_config,
)
from mnsim.events import AttachmentState, EventRecord, tick_events
from mnsim.geometry import Grid, Point, Territory, build_grid, tile_of
from mnsim.mobility import (
    STREAM_DEVICES,
    STREAM_POPULATION,
    Person,
    movement_rng,
    step,
    stream,
    synthesize_population,
)
from mnsim.radio import compute_coverage, compute_signal_measures
from mnsim.schema import Issue, ValidationReport
from mnsim import tables

MANIFEST_NAME = "manifest.json"
MAP_WKT_NAME = "map.wkt"
MAP_XML_NAME = "map.xml"


def events_filename(mno_name: str) -> str:
    return f"AntennaInfo_MNO_{mno_name}.csv"


def coverage_filename(mno_name: str) -> str:
    return f"AntennaCells_{mno_name}.csv"


def signal_filename(mno_name: str) -> str:
    return f"SignalMeasure_{mno_name}.csv"


@dataclass(frozen=True)
class Scenario:
    simulation: SimulationConfig
    persons: PersonsConfig
    antennas: tuple[AntennaConfig, ...]
    map: MapSpec
    territory: Territory
    grid: Grid
    inputs: Mapping[str, Path] = field(default_factory=dict)
    seed_override: bool = False

    def antennas_of(self, mno_id: int) -> list[AntennaConfig]:
        return [a for a in self.antennas if a.mno_id == mno_id]


@dataclass
class Tick:
    t: int
    persons: list[Person]
    positions: dict[int, Point]
    events: dict[str, list[EventRecord]]
    states: dict[str, AttachmentState]


@dataclass(frozen=True)
class SimulationOutput:
    output_dir: Path
    grid: Path
    persons: Path
    antennas: Path
    events: dict[str, Path]
    coverage: dict[str, Path]
    signal: dict[str, Path]
    dictionaries: dict[str, Path]
    map_wkt: Path
    map_xml: Path
    manifest: Path

    def files(self) -> list[Path]:
        out = [self.grid, self.persons, self.antennas, self.map_wkt, self.map_xml, self.manifest]
        for group in (self.events, self.coverage, self.signal, self.dictionaries):
            out.extend(group.values())
        return sorted(out)


def _check_network(sim: SimulationConfig, antennas: Sequence[AntennaConfig], label: str) -> None:
    known = {m.mno_id: m.mno_name for m in sim.mno_list}
    issues = []
    for i, a in enumerate(antennas, start=1):
        if known.get(a.mno_id) != a.mno_name:
            issues.append(
                Issue(
                    f"/antennas/antenna[{i}]/mno_id",
                    "mno_reference",
                    f"antenna {a.antenna_id}: MNO ({a.mno_id}, {a.mno_name!r}) is not declared in the simulation",
                )
            )
    if issues:
        raise ConfigValidationError(label, ValidationReport(tuple(issues)))


def load_scenario(
    simulation_path: str | Path,
    persons_path: str | Path,
    antennas_path: str | Path,
    map_paths: tuple[str | Path, str | Path],
    seed: int | None = None,
) -> Scenario:
    """Parse and cross-check all inputs; ``seed`` overrides the configured one."""
    wkt_path, xml_path = map_paths
    sim = parse_simulation_config(simulation_path)
    if seed is not None:
        sim = replace(sim, random_seed=seed)
    persons = parse_persons_config(persons_path)
    antennas = parse_antennas_config(antennas_path)
    _check_network(sim, antennas, str(antennas_path))
    map_spec = parse_map(wkt_path, xml_path)
    territory = map_spec.territory()
    grid = build_grid(territory, map_spec.tile_dim_x, map_spec.tile_dim_y)
    antennas = tuple(replace(a, tile_id=tile_of(grid, a.position)) for a in antennas)
    inputs = {
        "simulation": Path(simulation_path),
        "persons": Path(persons_path),
        "antennas": Path(antennas_path),
        "map_wkt": Path(wkt_path),
        "map_xml": Path(xml_path),
    }
    return Scenario(sim, persons, antennas, map_spec, territory, grid, inputs, seed is not None)


def tick_times(sim: SimulationConfig) -> list[int]:
    """Start to end in ``time_increment`` steps; a short last step lands on ``end_time``."""
    times = list(range(sim.start_time, sim.end_time + 1, sim.time_increment))
    if times[-1] != sim.end_time:
        times.append(sim.end_time)
    return times


def assign_devices(persons: Sequence[Person], sim: SimulationConfig, seed: int) -> dict[int, int]:
    """MNO id of every device, drawn by market share in ascending device order."""
    rng = stream(seed, STREAM_DEVICES)
    mnos = sim.mno_list
    total = sum(m.market_share for m in mnos)
    cumulative, acc = [], 0.0
    for m in mnos:
        acc += m.market_share / total
        cumulative.append(acc)
    out = {}
    for device_id in sorted(d for p in persons for d in p.device_ids):
        u = float(rng.random())
        index = next((i for i, c in enumerate(cumulative) if u < c), len(mnos) - 1)
        out[device_id] = mnos[index].mno_id
    return out


def simulate(scenario: Scenario) -> Iterator[Tick]:
    """Yield the ground truth and network events of every tick, in time order.

    Positions handed to the network and recorded in outputs are quantized to
    the millimetre so every derived field agrees with what the CSVs contain.
    """
    sim = scenario.simulation
    seed = sim.random_seed
    persons = synthesize_population(
        scenario.persons, sim, scenario.territory, stream(seed, STREAM_POPULATION)
    )
    rngs = {p.person_id: movement_rng(seed, p.person_id) for p in persons}
    device_mno = assign_devices(persons, sim, seed)
    networks = {m.mno_id: {a.antenna_id: a for a in scenario.antennas_of(m.mno_id)} for m in sim.mno_list}
    states = {m.mno_name: AttachmentState() for m in sim.mno_list}
    previous_t = None
    for t in tick_times(sim):
        if previous_t is not None:
            dt = t - previous_t
            persons = [
                step(p, sim.movement_pattern, scenario.territory, dt, rngs[p.person_id]) for p in persons
            ]
        previous_t = t
        positions = {
            p.person_id: (tables.quantize(p.position[0]), tables.quantize(p.position[1])) for p in persons
        }
        events = {}
        for mno in sim.mno_list:
            devices = [
                (d, positions[p.person_id])
                for p in persons
                for d in p.device_ids
                if device_mno[d] == mno.mno_id
            ]
            events[mno.mno_name], states[mno.mno_name] = tick_events(
                devices, networks[mno.mno_id], states[mno.mno_name], t, tech=mno.tech, grid=scenario.grid
            )
        yield Tick(t, persons, positions, events, dict(states))


# -- writers ------------------------------------------------------------------


def write_grid(grid: Grid, path: str | Path) -> None:
    tables.write_table(
        path,
        tables.GRID,
        [(grid.x_origin, grid.y_origin, grid.tile_dim_x, grid.tile_dim_y, grid.n_cols, grid.n_rows)],
    )


def persons_rows(t: int, persons: Sequence[Person], positions: Mapping[int, Point], grid: Grid) -> list[tuple]:
    rows = []
    for p in sorted(persons, key=lambda p: p.person_id):
        pos = positions[p.person_id]
        devices = list(p.device_ids) + [None] * (2 - len(p.device_ids))
        rows.append((t, p.person_id, pos[0], pos[1], tile_of(grid, pos), devices[0], devices[1]))
    return rows


def write_persons_tick(writer: tables.TableWriter, t: int, persons: Sequence[Person], positions: Mapping[int, Point], grid: Grid) -> None:
    for row in persons_rows(t, persons, positions, grid):
        writer.write(row)


def antenna_row(a: AntennaConfig) -> tuple:
    return tuple(getattr(a, c.name) for c in tables.ANTENNAS.columns)


def write_antennas(antennas: Sequence[AntennaConfig], path: str | Path) -> None:
    tables.write_table(path, tables.ANTENNAS, [antenna_row(a) for a in sorted(antennas, key=lambda a: a.antenna_id)])


def event_row(e: EventRecord) -> tuple:
    return (e.t, e.antenna_id, int(e.event_code), e.device_id, e.x, e.y, e.tile_id, e.tech, e.timing_advance)


def run_simulation(
    simulation_path: str | Path,
    persons_path: str | Path,
    antennas_path: str | Path,
    map_paths: tuple[str | Path, str | Path],
    output_dir: str | Path,
    seed: int | None = None,
    prior_paths: Sequence[str | Path] = (),
) -> SimulationOutput:
    """Run a whole simulation and write every output file into ``output_dir``.

    Identical inputs and seed give byte-identical outputs. Prior-probability
    files, if given, are not used by the simulation; their digests are
    recorded in the manifest.
    """
    scenario = load_scenario(simulation_path, persons_path, antennas_path, map_paths, seed)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = scenario.simulation

    grid_path = out / "grid.csv"
    write_grid(scenario.grid, grid_path)
    antennas_path_out = out / "antennas.csv"
    write_antennas(scenario.antennas, antennas_path_out)
    dictionaries = {d.name: tables.write_dictionary(d, out) for d in tables.ALL_DICTIONARIES}
    map_wkt = out / MAP_WKT_NAME
    map_xml = out / MAP_XML_NAME
    shutil.copyfile(map_paths[0], map_wkt)
    shutil.copyfile(map_paths[1], map_xml)

    signal, coverage, events = {}, {}, {}
    for mno in sim.mno_list:
        network = scenario.antennas_of(mno.mno_id)
        signal[mno.mno_name] = out / signal_filename(mno.mno_name)
        tables.write_table(
            signal[mno.mno_name],
            tables.SIGNAL,
            [(m.antenna_id, m.tile_id, m.strength_dbm, m.dominance) for m in compute_signal_measures(network, scenario.grid)],
        )
        coverage[mno.mno_name] = out / coverage_filename(mno.mno_name)
        tables.write_table(
            coverage[mno.mno_name],
            tables.COVERAGE,
            [(c.antenna_id, sorted(c.covered_tiles)) for c in compute_coverage(network, scenario.grid)],
        )
        events[mno.mno_name] = out / events_filename(mno.mno_name)

    persons_path_out = out / "persons.csv"
    writers = {name: tables.TableWriter(path, tables.EVENTS) for name, path in events.items()}
    n_ticks = 0
    try:
        with tables.TableWriter(persons_path_out, tables.PERSONS) as pw:
            for tick in simulate(scenario):
                n_ticks += 1
                write_persons_tick(pw, tick.t, tick.persons, tick.positions, scenario.grid)
                for name, records in tick.events.items():
                    for e in records:
                        writers[name].write(event_row(e))
    finally:
        for w in writers.values():
            w.close()

    manifest_path = out / MANIFEST_NAME
    manifest = {
        "artifact": "mnsim",
        "version": __version__,
        "seed": sim.random_seed,
        "seed_override": scenario.seed_override,
        "crs": scenario.map.crs_code,
        "ticks": n_ticks,
        "mnos": [{"mno_id": m.mno_id, "mno_name": m.mno_name, "tech": m.tech} for m in sim.mno_list],
        "inputs": {
            role: {"file": path.name, "sha256": file_digest(path)} for role, path in scenario.inputs.items()
        },
        "priors": [{"file": Path(p).name, "sha256": file_digest(p)} for p in prior_paths],
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    return SimulationOutput(
        output_dir=out,
        grid=grid_path,
        persons=persons_path_out,
        antennas=antennas_path_out,
        events=events,
        coverage=coverage,
        signal=signal,
        dictionaries=dictionaries,
        map_wkt=map_wkt,
        map_xml=map_xml,
        manifest=manifest_path,
    )
