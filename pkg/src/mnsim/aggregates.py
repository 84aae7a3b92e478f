"""Load simulation outputs and aggregate the ground truth.

``compute_total`` counts persons and devices per group of key values;
``compute_odmatrix`` counts transitions between territorial units across
consecutive ticks. Persons outside every subregion are assigned the reserved
unit ``"<none>"`` so that marginals stay exact.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from mnsim.config import AntennaConfig, parse_map
from mnsim.events import EventCode, EventRecord
from mnsim.geometry import Grid, Territory, tile_of
from mnsim.radio import CoverageCell, SignalMeasure
from mnsim import engine, tables

NONE_UNIT = "<none>"
MEASURES = ("individuals", "devices", "individuals_dev0", "individuals_dev1", "individuals_dev2")
KEYS = ("t", "Subregion_long", "tile_id")
FILE_ROLES = ("network_parameters", "signal", "events", "coverage_cells", "grid", "individuals")


class SimDataError(ValueError):
    pass


class AggregationError(ValueError):
    pass


@dataclass(frozen=True)
class IndividualRow:
    t: int
    person_id: int
    x: float
    y: float
    tile_id: int | None
    device_ids: tuple[int, ...]
    subregion_long: str | None = None

    @property
    def device_count(self) -> int:
        return len(self.device_ids)

    def key(self, name: str) -> Any:
        if name == "t":
            return self.t
        if name == "Subregion_long":
            return NONE_UNIT if self.subregion_long is None else self.subregion_long
        if name == "tile_id":
            return NONE_UNIT if self.tile_id is None else self.tile_id
        raise AggregationError(f"unknown key {name!r}; expected one of {KEYS}")


@dataclass
class SimData:
    territory: Territory
    grid: Grid
    network: list[AntennaConfig]
    signal: list[SignalMeasure]
    coverage: list[CoverageCell]
    events: list[EventRecord]
    individuals: list[IndividualRow]
    crs_code: int | None = None

    def key_domain(self, keys: Iterable[str]) -> dict[str, list]:
        """Declared values for each key: observed times, every subregion plus
        ``"<none>"``, every tile."""
        out = {}
        for k in keys:
            if k == "t":
                out[k] = sorted({r.t for r in self.individuals})
            elif k == "Subregion_long":
                out[k] = [s.long_name for s in self.territory.subregions] + [NONE_UNIT]
            elif k == "tile_id":
                out[k] = list(self.grid.tile_ids)
            else:
                raise AggregationError(f"unknown key {k!r}; expected one of {KEYS}")
        return out


# -- loading ------------------------------------------------------------------


def output_file_map(output_dir: str | Path, mno_name: str | None = None) -> dict[str, dict[str, Path]]:
    """File map for ``read_sim_data`` pointing at an engine output directory.

    Without ``mno_name`` the first MNO listed in the run manifest is used.
    """
    out = Path(output_dir)
    if mno_name is None:
        manifest = json.loads((out / engine.MANIFEST_NAME).read_text(encoding="utf-8"))
        if not manifest["mnos"]:
            raise SimDataError(f"{out}: manifest lists no MNO")
        mno_name = manifest["mnos"][0]["mno_name"]
    d = lambda table: out / table.filename  # noqa: E731
    return {
        "map": {"wkt": out / engine.MAP_WKT_NAME, "xml": out / engine.MAP_XML_NAME},
        "network_parameters": {"csv": out / "antennas.csv", "xml": d(tables.ANTENNAS)},
        "signal": {"csv": out / engine.signal_filename(mno_name), "xml": d(tables.SIGNAL)},
        "events": {"csv": out / engine.events_filename(mno_name), "xml": d(tables.EVENTS)},
        "coverage_cells": {"csv": out / engine.coverage_filename(mno_name), "xml": d(tables.COVERAGE)},
        "grid": {"csv": out / "grid.csv", "xml": d(tables.GRID)},
        "individuals": {"csv": out / "persons.csv", "xml": d(tables.PERSONS)},
    }


def _table(file_map: Mapping[str, Mapping[str, Any]], role: str, expected: tables.TableDictionary) -> list[dict]:
    entry = file_map.get(role)
    if entry is None:
        raise SimDataError(f"file map has no entry for {role!r}")
    for part in ("csv", "xml"):
        if not Path(entry[part]).is_file():
            raise FileNotFoundError(f"{role}: missing {part} file {entry[part]}")
    dictionary = tables.read_dictionary(entry["xml"])
    if dictionary.header != expected.header:
        raise SimDataError(f"{entry['xml']}: dictionary does not describe a {expected.name} table")
    return tables.read_table(entry["csv"], dictionary)


def read_sim_data(file_map: Mapping[str, Mapping[str, Any]], crs_code: int | None = None) -> SimData:
    """Read every output table, join individuals to subregions and check consistency.

    ``crs_code`` is stored as metadata (falling back to the map's own code);
    it must agree with the map's code when both are given, since nothing is
    reprojected.
    """
    map_entry = file_map.get("map")
    if map_entry is None:
        raise SimDataError("file map has no entry for 'map'")
    for part in ("wkt", "xml"):
        if not Path(map_entry[part]).is_file():
            raise FileNotFoundError(f"map: missing {part} file {map_entry[part]}")
    map_spec = parse_map(map_entry["wkt"], map_entry["xml"])
    if crs_code is not None and map_spec.crs_code is not None and crs_code != map_spec.crs_code:
        raise SimDataError(f"requested CRS {crs_code} but the map declares {map_spec.crs_code}")
    territory = map_spec.territory()

    grid_rows = _table(file_map, "grid", tables.GRID)
    if len(grid_rows) != 1:
        raise SimDataError(f"grid table must have one row, found {len(grid_rows)}")
    g = grid_rows[0]
    grid = Grid(g["x_origin"], g["y_origin"], g["tile_dim_x"], g["tile_dim_y"], g["n_cols"], g["n_rows"])

    network = [AntennaConfig(**row) for row in _table(file_map, "network_parameters", tables.ANTENNAS)]
    signal = [SignalMeasure(**row) for row in _table(file_map, "signal", tables.SIGNAL)]
    coverage = [
        CoverageCell(row["antenna_id"], frozenset(row["tiles"]))
        for row in _table(file_map, "coverage_cells", tables.COVERAGE)
    ]
    events = [
        EventRecord(
            t=r["t"],
            device_id=r["device_id"],
            antenna_id=r["antenna_id"],
            event_code=EventCode(r["event_code"]),
            tech=r["tech"],
            timing_advance=r["TA"],
            x=r["x"],
            y=r["y"],
            tile_id=r["tile_id"],
        )
        for r in _table(file_map, "events", tables.EVENTS)
    ]

    joined: dict[tuple[float, float], str | None] = {}
    individuals = []
    for r in _table(file_map, "individuals", tables.PERSONS):
        pos = (r["x"], r["y"])
        if tile_of(grid, pos) != r["tile_id"]:
            raise SimDataError(f"individuals: t={r['t']} person {r['person_id']}: tile_id disagrees with (x, y)")
        if pos not in joined:
            joined[pos] = territory.subregion_long_of(pos)
        devices = tuple(d for d in (r["device_id_1"], r["device_id_2"]) if d is not None)
        individuals.append(IndividualRow(r["t"], r["person_id"], r["x"], r["y"], r["tile_id"], devices, joined[pos]))

    present = {(r.t, d) for r in individuals for d in r.device_ids}
    for e in events:
        if (e.t, e.device_id) not in present:
            raise SimDataError(f"events: device {e.device_id} at t={e.t} has no ground-truth row")

    return SimData(
        territory=territory,
        grid=grid,
        network=network,
        signal=signal,
        coverage=coverage,
        events=events,
        individuals=individuals,
        crs_code=crs_code if crs_code is not None else map_spec.crs_code,
    )


# -- aggregate tables ---------------------------------------------------------


@dataclass
class AggregateTable:
    keys: tuple[str, ...]
    measures: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    @property
    def columns(self) -> tuple[str, ...]:
        return self.keys + self.measures

    def as_dict(self) -> dict[tuple, dict[str, int]]:
        n = len(self.keys)
        return {row[:n]: dict(zip(self.measures, row[n:])) for row in self.rows}

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buf.getvalue()


def _as_tuple(value: str | Sequence[str]) -> tuple[str, ...]:
    return (value,) if isinstance(value, str) else tuple(value)


def _check_measures(what: tuple[str, ...]) -> None:
    if not what:
        raise AggregationError("no measure requested")
    for m in what:
        if m not in MEASURES:
            raise AggregationError(f"unknown measure {m!r}; expected one of {MEASURES}")


def _measure_values(device_counts: Iterable[int], what: tuple[str, ...]) -> tuple[int, ...]:
    counts = list(device_counts)
    values = {
        "individuals": len(counts),
        "devices": sum(counts),
        "individuals_dev0": counts.count(0),
        "individuals_dev1": counts.count(1),
        "individuals_dev2": counts.count(2),
    }
    return tuple(values[m] for m in what)


def _sort_key(value: Any) -> tuple:
    # keeps "<none>" and numeric keys orderable together
    return (0, value, "") if isinstance(value, (int, float)) else (1, 0, str(value))


def _axis(declared: Sequence, observed: set) -> list:
    """Declared values in their given order, then any undeclared observed ones sorted."""
    axis = list(dict.fromkeys(declared))
    axis += sorted(observed - set(axis), key=_sort_key)
    return axis


def compute_total(
    individuals: Sequence[IndividualRow],
    what: str | Sequence[str],
    by: str | Sequence[str],
    domain: Mapping[str, Sequence] | None = None,
) -> AggregateTable:
    """Counts per group of ``by`` values, zero-filled over the key domain.

    ``individuals`` counts distinct persons, ``devices`` sums their devices and
    ``individuals_devK`` counts persons with exactly K devices. Keys missing
    from ``domain`` take their observed values.
    """
    what, by = _as_tuple(what), _as_tuple(by)
    _check_measures(what)
    domain = dict(domain or {})
    groups: dict[tuple, dict[int, int]] = {}
    for r in individuals:
        key = tuple(r.key(k) for k in by)
        groups.setdefault(key, {})[r.person_id] = r.device_count
    axes = []
    for i, k in enumerate(by):
        if k not in KEYS:
            raise AggregationError(f"unknown key {k!r}; expected one of {KEYS}")
        axes.append(_axis(domain.get(k, ()), {key[i] for key in groups}))
    table = AggregateTable(by, what)
    for key in itertools.product(*axes):
        table.rows.append(key + _measure_values(groups.get(key, {}).values(), what))
    return table


def compute_odmatrix(
    individuals: Sequence[IndividualRow],
    what: str | Sequence[str],
    by: Sequence[str] = ("t", "Subregion_long"),
    domain: Mapping[str, Sequence] | None = None,
) -> AggregateTable:
    """Transition counts between units over every consecutive pair of times.

    Output columns are ``t_from, t_to, unit_from, unit_to`` followed by the
    measures; all unit pairs appear, zero-filled.
    """
    what = _as_tuple(what)
    _check_measures(what)
    if len(by) != 2:
        raise AggregationError("by must name a time key and a unit key")
    time_key, unit_key = by
    if time_key != "t" or unit_key not in ("Subregion_long", "tile_id"):
        raise AggregationError(f"unsupported OD keys {tuple(by)!r}")
    domain = dict(domain or {})
    located: dict[Any, dict[int, tuple[Any, int]]] = {}
    for r in individuals:
        located.setdefault(r.key(time_key), {})[r.person_id] = (r.key(unit_key), r.device_count)
    times = sorted(set(domain.get(time_key, ())) | set(located))
    if len(times) < 2:
        raise AggregationError("an OD matrix needs at least two time points")
    observed = {u for at in located.values() for u, _ in at.values()}
    if unit_key == "Subregion_long":
        observed.add(NONE_UNIT)
    units = _axis(domain.get(unit_key, ()), observed)

    flows: dict[tuple, list[int]] = {}
    for t_from, t_to in zip(times, times[1:]):
        start, end = located.get(t_from, {}), located.get(t_to, {})
        for pid, (u_from, n_dev) in start.items():
            if pid in end:
                flows.setdefault((t_from, t_to, u_from, end[pid][0]), []).append(n_dev)
    table = AggregateTable(("t_from", "t_to", "unit_from", "unit_to"), what)
    for t_from, t_to in zip(times, times[1:]):
        for u_from, u_to in itertools.product(units, units):
            key = (t_from, t_to, u_from, u_to)
            table.rows.append(key + _measure_values(flows.get(key, []), what))
    return table
