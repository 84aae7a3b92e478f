"""Simulator input documents: parse, validate, serialize and update.

Four documents drive a run: ``simulation.xml``, ``persons.xml``,
``antennas.xml`` and the map (``map.wkt`` plus the ``map.xml`` subdivisions).
Each XML document is checked against a rule file (see :mod:`mnsim.schema`);
the built-in rule files are addressed by name, e.g. ``"simulation_rules"``.
"""

from __future__ import annotations

import copy
import hashlib
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from mnsim.geometry import GeometryError, Region, Subregion, Territory, parse_wkt
from mnsim.mobility import HomeWork, HomeWorkManhattan, MovementPattern, RandomWalkClosedMap
from mnsim.schema import (
    DocumentParseError,
    Issue,
    Schema,
    ValidationReport,
    load_schema,
    parse_document,
    parse_document_bytes,
    validate_tree,
)

__all__ = [
    "AntennaConfig",
    "ConfigValidationError",
    "DocumentParseError",
    "MapSpec",
    "Mno",
    "PersonsConfig",
    "SimulationConfig",
    "canonical_bytes",
    "parse_antennas_config",
    "parse_map",
    "parse_persons_config",
    "parse_simulation_config",
    "resolve_schema",
    "update_config",
    "validate_config",
]

CELL_TYPES = ("omnidirectional", "directional_120")
DEFAULT_TECH = "4G"
DEFAULT_BEAM_V_DEG = 10.0


class ConfigValidationError(ValueError):
    """A document failed schema validation; ``report`` lists the violations."""

    def __init__(self, label: str, report: ValidationReport) -> None:
        self.report = report
        lines = "\n  ".join(str(i) for i in report.issues)
        super().__init__(f"{label} is invalid:\n  {lines}")


# -- domain types -------------------------------------------------------------


@dataclass(frozen=True)
class Mno:
    mno_id: int
    mno_name: str
    tech: str = DEFAULT_TECH
    market_share: float = 1.0


@dataclass(frozen=True)
class SimulationConfig:
    start_time: int
    end_time: int
    movement_pattern: MovementPattern
    prob_devices: tuple[float, float, float]
    mno_list: tuple[Mno, ...]
    time_increment: int = 1
    random_seed: int = 0

    def mno(self, mno_id: int) -> Mno:
        for m in self.mno_list:
            if m.mno_id == mno_id:
                return m
        raise KeyError(mno_id)


@dataclass(frozen=True)
class PersonsConfig:
    num_persons: int
    speed_walk: float
    speed_car: float
    time_at_home: float
    time_at_work: float
    prob_car: float = 0.0


@dataclass(frozen=True)
class AntennaConfig:
    """Radio cell parameters. ``tile_id`` is filled in once a grid exists."""

    antenna_id: int
    mno_id: int
    mno_name: str
    max_connections: int
    power_w: float
    path_loss_exponent: float
    cell_type: str
    min_strength_dbm: float
    min_dominance: float
    dominance_midpoint_dbm: float
    dominance_steepness: float
    x: float
    y: float
    azimuth_deg: float | None = None
    tilt_deg: float = 0.0
    elevation_m: float = 0.0
    beam_h_deg: float = 360.0
    beam_v_deg: float = DEFAULT_BEAM_V_DEG
    height_m: float = 0.0
    tile_id: int | None = None

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def is_directional(self) -> bool:
        return self.cell_type == "directional_120"


@dataclass(frozen=True)
class MapSpec:
    boundary: Region
    tile_dim_x: float
    tile_dim_y: float
    subregions: tuple[Subregion, ...] = ()
    crs_code: int | None = None

    def territory(self) -> Territory:
        return Territory(self.boundary, self.subregions, self.crs_code)


# -- schemas ------------------------------------------------------------------

BUILTIN_SCHEMAS = ("simulation_rules", "persons_rules", "antennas_rules", "map_rules")


def _data_path(*parts: str) -> Path:
    return Path(str(resources.files("mnsim").joinpath("data", *parts)))


def resolve_schema(name_or_path: str | Path) -> Path:
    """A rule-file path, or the name of a built-in rule file (with or without ``.xml``)."""
    path = Path(name_or_path)
    if path.is_file():
        return path
    stem = path.name[:-4] if path.name.endswith(".xml") else path.name
    if stem in BUILTIN_SCHEMAS:
        return _data_path("schemas", f"{stem}.xml")
    with_ext = path.with_name(path.name + ".xml")
    if with_ext.is_file():
        return with_ext
    raise FileNotFoundError(f"no rule file at {name_or_path}")


_schema_cache: dict[Path, Schema] = {}


def _schema(name_or_path: str | Path) -> Schema:
    path = resolve_schema(name_or_path).resolve()
    if path not in _schema_cache:
        _schema_cache[path] = load_schema(path)
    return _schema_cache[path]


def validate_config(document_path: str | Path, schema_path: str | Path) -> ValidationReport:
    tree = parse_document(document_path)
    return validate_tree(tree, _schema(schema_path))


def _validated_root(document_path: str | Path, schema: str | Path) -> ET.Element:
    tree = parse_document(document_path)
    report = validate_tree(tree, _schema(schema))
    if not report.is_valid:
        raise ConfigValidationError(str(document_path), report)
    return tree.getroot()


# -- parsing ------------------------------------------------------------------


def _text(node: ET.Element, name: str, default: str | None = None) -> str | None:
    found = node.find(name)
    if found is None:
        return default
    return (found.text or "").strip()


def _float(node: ET.Element, name: str, default: float | None = None) -> float | None:
    raw = _text(node, name)
    return default if raw is None else float(raw)


def _int(node: ET.Element, name: str, default: int | None = None) -> int | None:
    raw = _text(node, name)
    return default if raw is None else int(raw)


def _movement_pattern(node: ET.Element) -> MovementPattern:
    if node.find("random_walk_closed_map") is not None:
        return RandomWalkClosedMap()
    if node.find("home_work") is not None:
        return HomeWork()
    grid = node.find("manhattan_grid")
    assert grid is not None  # guaranteed by the schema choice
    return HomeWorkManhattan(
        x_step=float(_text(grid, "x_step")),
        y_step=float(_text(grid, "y_step")),
        x_origin=float(_text(grid, "x_origin")),
        y_origin=float(_text(grid, "y_origin")),
    )


def simulation_from_element(root: ET.Element) -> SimulationConfig:
    mnos = tuple(
        Mno(
            mno_id=int(_text(m, "mno_id")),
            mno_name=_text(m, "mno_name"),
            tech=_text(m, "tech", DEFAULT_TECH),
            market_share=_float(m, "market_share", 1.0),
        )
        for m in root.findall("mno")
    )
    return SimulationConfig(
        start_time=_int(root, "start_time"),
        end_time=_int(root, "end_time"),
        time_increment=_int(root, "time_increment", 1),
        random_seed=_int(root, "random_seed", 0),
        prob_devices=(
            _float(root, "prob_0_devices"),
            _float(root, "prob_1_devices"),
            _float(root, "prob_2_devices"),
        ),
        mno_list=mnos,
        movement_pattern=_movement_pattern(root.find("movement_pattern")),
    )


def persons_from_element(root: ET.Element) -> PersonsConfig:
    return PersonsConfig(
        num_persons=_int(root, "num_persons"),
        speed_walk=_float(root, "speed_walk"),
        speed_car=_float(root, "speed_car"),
        prob_car=_float(root, "prob_car", 0.0),
        time_at_home=_float(root, "time_at_home"),
        time_at_work=_float(root, "time_at_work"),
    )


def antenna_from_element(node: ET.Element) -> AntennaConfig:
    cell_type = _text(node, "cell_type")
    directional = cell_type == "directional_120"
    return AntennaConfig(
        antenna_id=_int(node, "antenna_id"),
        mno_id=_int(node, "mno_id"),
        mno_name=_text(node, "mno_name"),
        max_connections=_int(node, "max_connections"),
        power_w=_float(node, "power_w"),
        path_loss_exponent=_float(node, "path_loss_exponent"),
        cell_type=cell_type,
        min_strength_dbm=_float(node, "min_strength_dbm"),
        min_dominance=_float(node, "min_dominance"),
        dominance_midpoint_dbm=_float(node, "dominance_midpoint_dbm"),
        dominance_steepness=_float(node, "dominance_steepness"),
        azimuth_deg=_float(node, "azimuth_deg"),
        tilt_deg=_float(node, "tilt_deg", 0.0),
        elevation_m=_float(node, "elevation_m", 0.0),
        # the horizontal beam of a 120-degree sector is fixed by its type
        beam_h_deg=120.0 if directional else _float(node, "beam_h_deg", 360.0),
        beam_v_deg=_float(node, "beam_v_deg", DEFAULT_BEAM_V_DEG),
        height_m=_float(node, "height_m", 0.0),
        x=_float(node, "x"),
        y=_float(node, "y"),
    )


def parse_simulation_config(document_path: str | Path, schema: str | Path = "simulation_rules") -> SimulationConfig:
    return simulation_from_element(_validated_root(document_path, schema))


def parse_persons_config(document_path: str | Path, schema: str | Path = "persons_rules") -> PersonsConfig:
    return persons_from_element(_validated_root(document_path, schema))


def parse_antennas_config(document_path: str | Path, schema: str | Path = "antennas_rules") -> list[AntennaConfig]:
    root = _validated_root(document_path, schema)
    return [antenna_from_element(node) for node in root.findall("antenna")]


def parse_map(
    wkt_path: str | Path,
    subdivisions_path: str | Path,
    schema: str | Path = "map_rules",
) -> MapSpec:
    """Read the territory polygon and its subdivisions.

    Raises ``ConfigValidationError`` if the WKT is unreadable, the boundary is
    not a simple polygon, or a subregion reaches outside the boundary's
    bounding box.
    """
    wkt_text = Path(wkt_path).read_text(encoding="utf-8")
    try:
        boundary = parse_wkt(wkt_text)
    except GeometryError as exc:
        raise ConfigValidationError(
            str(wkt_path), ValidationReport((Issue(str(wkt_path), "type", f"invalid WKT: {exc}"),))
        ) from exc
    root = _validated_root(subdivisions_path, schema)
    xmin, ymin, xmax, ymax = boundary.bbox
    subregions, issues = [], []
    for i, node in enumerate(root.findall("subregion"), start=1):
        region = parse_wkt(_text(node, "wkt"))
        sx0, sy0, sx1, sy1 = region.bbox
        if sx0 < xmin or sy0 < ymin or sx1 > xmax or sy1 > ymax:
            issues.append(
                Issue(f"/map/subregion[{i}]/wkt", "within_boundary", "subregion leaves the boundary envelope")
            )
        subregions.append(Subregion(_int(node, "subregion_id"), _text(node, "subregion_long"), region))
    if issues:
        raise ConfigValidationError(str(subdivisions_path), ValidationReport(tuple(issues)))
    spec = MapSpec(
        boundary=boundary,
        tile_dim_x=_float(root, "tile_dim_x"),
        tile_dim_y=_float(root, "tile_dim_y"),
        subregions=tuple(subregions),
        crs_code=_int(root, "crs"),
    )
    try:
        spec.territory()
    except GeometryError as exc:
        raise ConfigValidationError(
            str(wkt_path), ValidationReport((Issue(str(wkt_path), "geometry", str(exc)),))
        ) from exc
    return spec


def read_opaque(path: str | Path) -> bytes:
    """Prior-probability inputs are carried through untouched."""
    return Path(path).read_bytes()


# -- serialization ------------------------------------------------------------


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _sub(parent: ET.Element, tag: str, value: Any = None) -> ET.Element:
    node = ET.SubElement(parent, tag)
    if value is not None:
        node.text = _fmt(value)
    return node


def simulation_to_element(cfg: SimulationConfig) -> ET.Element:
    root = ET.Element("simulation")
    _sub(root, "start_time", cfg.start_time)
    _sub(root, "end_time", cfg.end_time)
    _sub(root, "time_increment", cfg.time_increment)
    _sub(root, "random_seed", cfg.random_seed)
    for k, p in enumerate(cfg.prob_devices):
        _sub(root, f"prob_{k}_devices", p)
    for m in cfg.mno_list:
        node = _sub(root, "mno")
        _sub(node, "mno_id", m.mno_id)
        _sub(node, "mno_name", m.mno_name)
        _sub(node, "tech", m.tech)
        _sub(node, "market_share", m.market_share)
    mp = _sub(root, "movement_pattern")
    pattern = cfg.movement_pattern
    if isinstance(pattern, RandomWalkClosedMap):
        _sub(mp, "random_walk_closed_map")
    elif isinstance(pattern, HomeWork):
        _sub(mp, "home_work")
    else:
        grid = _sub(mp, "manhattan_grid")
        grid.set("type", "home_work_manhattan")
        for name in ("x_step", "y_step", "x_origin", "y_origin"):
            _sub(grid, name, getattr(pattern, name))
    return root


def persons_to_element(cfg: PersonsConfig) -> ET.Element:
    root = ET.Element("persons")
    for name in ("num_persons", "speed_walk", "speed_car", "prob_car", "time_at_home", "time_at_work"):
        _sub(root, name, getattr(cfg, name))
    return root


_ANTENNA_FIELDS = (
    "antenna_id", "mno_id", "mno_name", "max_connections", "power_w", "path_loss_exponent",
    "cell_type", "min_strength_dbm", "min_dominance", "dominance_midpoint_dbm",
    "dominance_steepness", "azimuth_deg", "tilt_deg", "elevation_m", "beam_h_deg",
    "beam_v_deg", "height_m", "x", "y",
)


def antennas_to_element(antennas: list[AntennaConfig]) -> ET.Element:
    root = ET.Element("antennas")
    for a in antennas:
        node = _sub(root, "antenna")
        for name in _ANTENNA_FIELDS:
            value = getattr(a, name)
            if value is not None:
                _sub(node, name, value)
    return root


def canonical_bytes(tree: ET.ElementTree | ET.Element) -> bytes:
    """Canonical serialization: whitespace-only text dropped, two-space indent, LF endings."""
    root = tree.getroot() if isinstance(tree, ET.ElementTree) else tree
    root = copy.deepcopy(root)
    for node in root.iter():
        if node.text is not None and not node.text.strip():
            node.text = None
        elif node.text is not None:
            node.text = node.text.strip()
        node.tail = None
    ET.indent(root, space="  ")
    return ET.tostring(root, encoding="UTF-8", xml_declaration=True) + b"\n"


def write_document(root: ET.Element, path: str | Path) -> None:
    Path(path).write_bytes(canonical_bytes(root))


# -- updates ------------------------------------------------------------------


def _build(tag: str, value: Any) -> ET.Element:
    node = ET.Element(tag)
    _fill(node, value)
    return node


def _fill(node: ET.Element, value: Any) -> None:
    if isinstance(value, Mapping):
        for key, sub in value.items():
            if key.startswith("@"):
                node.set(key[1:], _fmt(sub))
            elif isinstance(sub, (list, tuple)):
                for item in sub:
                    node.append(_build(key, item))
            else:
                node.append(_build(key, sub))
    elif value is not None:
        node.text = _fmt(value)


def _insert_index(parent: ET.Element, tag: str, order: list[str]) -> int:
    """Position after the last child that the schema orders before ``tag``."""
    if tag not in order:
        return len(parent)
    rank = order.index(tag)
    index = 0
    for i, child in enumerate(parent):
        if child.tag in order and order.index(child.tag) <= rank:
            index = i + 1
    return index


def apply_overrides(root: ET.Element, overrides: Mapping[str, Any], order: list[str] | None = None) -> None:
    """Apply a hierarchical name->value map in place.

    Scalars replace an element's text; mappings replace the element's whole
    subtree (``"@name"`` keys become attributes); lists replace every
    occurrence of a repeated element.
    """
    order = order or []
    for key, value in overrides.items():
        if key.startswith("@"):
            root.set(key[1:], _fmt(value))
            continue
        existing = root.findall(key)
        index = list(root).index(existing[0]) if existing else _insert_index(root, key, order)
        items = list(value) if isinstance(value, (list, tuple)) else [value]
        if isinstance(value, (list, tuple)) or isinstance(value, Mapping) or not existing:
            for old in existing:
                root.remove(old)
            for offset, item in enumerate(items):
                root.insert(index + offset, _build(key, item))
        else:
            target = existing[0]
            for child in list(target):
                target.remove(child)
            target.text = _fmt(value)


def update_config(
    document_path: str | Path,
    overrides: Mapping[str, Any],
    schema_path: str | Path,
    output_path: str | Path,
) -> ValidationReport:
    """Write ``document_path`` with ``overrides`` applied to ``output_path``.

    The result is re-validated first; an invalid result raises
    ``ConfigValidationError`` and nothing is written.
    """
    schema = _schema(schema_path)
    root = parse_document(document_path).getroot()
    apply_overrides(root, overrides, schema.child_order())
    data = canonical_bytes(root)
    report = validate_tree(parse_document_bytes(data, str(output_path)), schema)
    if not report.is_valid:
        raise ConfigValidationError(str(output_path), report)
    Path(output_path).write_bytes(data)
    return report


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
