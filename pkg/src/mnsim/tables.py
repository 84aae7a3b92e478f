"""CSV layouts of the simulator outputs and their XML dictionaries.

Every CSV has a header row, comma separators, ``.`` decimals, LF line endings
and UTF-8 encoding. Coordinates carry three decimals (millimetres); other
reals use the shortest round-tripping representation. Missing values are
empty fields.

Each table has a dictionary file (``<name>_dict.xml``) listing its columns and
types. Readers check a CSV against its dictionary and name the first
offending column on mismatch.
"""

from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from mnsim.config import canonical_bytes

COLUMN_TYPES = ("integer", "decimal", "coordinate", "string", "optional_integer", "integer_list")


@dataclass(frozen=True)
class Column:
    name: str
    type: str
    description: str = ""


@dataclass(frozen=True)
class TableDictionary:
    name: str
    columns: tuple[Column, ...]
    notes: tuple[str, ...] = ()
    codes: dict[str, dict[int, str]] = field(default_factory=dict)

    @property
    def header(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def filename(self) -> str:
        return f"{self.name}_dict.xml"


class TableFormatError(ValueError):
    def __init__(self, path: str | Path, column: str | None, message: str) -> None:
        self.column = column
        where = f" column {column!r}" if column else ""
        super().__init__(f"{path}:{where} {message}")


GRID = TableDictionary(
    "grid",
    (
        Column("x_origin", "decimal", "x of the grid's lower-left corner (m)"),
        Column("y_origin", "decimal", "y of the grid's lower-left corner (m)"),
        Column("tile_dim_x", "decimal", "tile width (m)"),
        Column("tile_dim_y", "decimal", "tile height (m)"),
        Column("n_cols", "integer"),
        Column("n_rows", "integer"),
    ),
    notes=(
        "tile_order: row-major from the lower-left corner, tile_id = row * n_cols + col",
        "tiles are half-open [x0,x1) x [y0,y1); the grid's top and right edges are closed",
    ),
)

PERSONS = TableDictionary(
    "persons",
    (
        Column("t", "integer", "time (s)"),
        Column("person_id", "integer"),
        Column("x", "coordinate"),
        Column("y", "coordinate"),
        Column("tile_id", "optional_integer"),
        Column("device_id_1", "optional_integer", "empty when the person has no device"),
        Column("device_id_2", "optional_integer", "empty unless the person has two devices"),
    ),
)

ANTENNAS = TableDictionary(
    "antennas",
    (
        Column("antenna_id", "integer"),
        Column("mno_id", "integer"),
        Column("mno_name", "string"),
        Column("max_connections", "integer"),
        Column("power_w", "decimal"),
        Column("path_loss_exponent", "decimal"),
        Column("cell_type", "string"),
        Column("min_strength_dbm", "decimal"),
        Column("min_dominance", "decimal"),
        Column("dominance_midpoint_dbm", "decimal"),
        Column("dominance_steepness", "decimal"),
        Column("azimuth_deg", "decimal"),
        Column("tilt_deg", "decimal"),
        Column("elevation_m", "decimal"),
        Column("beam_h_deg", "decimal"),
        Column("beam_v_deg", "decimal"),
        Column("height_m", "decimal"),
        Column("x", "decimal"),
        Column("y", "decimal"),
        Column("tile_id", "optional_integer"),
    ),
)

EVENTS = TableDictionary(
    "events",
    (
        Column("t", "integer", "time (s)"),
        Column("antenna_id", "integer"),
        Column("event_code", "integer"),
        Column("device_id", "integer"),
        Column("x", "coordinate", "true device position"),
        Column("y", "coordinate", "true device position"),
        Column("tile_id", "optional_integer"),
        Column("tech", "string"),
        Column("TA", "integer", "timing advance: floor(distance / unit); unit 78.12 m (4G), 554 m (3G)"),
    ),
    notes=("on detach, antenna_id and TA refer to the antenna the device left",),
    codes={"event_code": {0: "attach", 1: "update", 2: "detach", 3: "handover"}},
)

SIGNAL = TableDictionary(
    "SignalMeasure",
    (
        Column("antenna_id", "integer"),
        Column("tile_id", "integer"),
        Column("strength_dbm", "decimal", "evaluated at the tile center"),
        Column("dominance", "decimal", "logistic transform of strength, in [0,1]"),
    ),
)

COVERAGE = TableDictionary(
    "AntennaCells",
    (
        Column("antenna_id", "integer"),
        Column("tiles", "integer_list", "comma-joined covered tile ids"),
    ),
    notes=("a tile is covered when strength >= min_strength_dbm AND dominance >= min_dominance at its center",),
)

ALL_DICTIONARIES = (GRID, PERSONS, ANTENNAS, EVENTS, SIGNAL, COVERAGE)


# -- formatting ---------------------------------------------------------------


def format_value(value: Any, kind: str) -> str:
    if value is None:
        return ""
    if kind == "coordinate":
        return f"{value:.3f}"
    if kind == "decimal":
        return repr(float(value))
    if kind == "integer_list":
        return ",".join(str(v) for v in value)
    return str(value)


def quantize(value: float) -> float:
    """The value a coordinate takes after a CSV round trip."""
    return float(f"{value:.3f}")


def parse_value(raw: str, kind: str) -> Any:
    if kind in ("integer",):
        return int(raw)
    if kind == "optional_integer":
        return None if raw == "" else int(raw)
    if kind in ("decimal", "coordinate"):
        return None if raw == "" else float(raw)
    if kind == "integer_list":
        return [] if raw == "" else [int(v) for v in raw.split(",")]
    return raw


class TableWriter:
    """Streaming writer for one table."""

    def __init__(self, path: str | Path, dictionary: TableDictionary) -> None:
        self.dictionary = dictionary
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(dictionary.header)

    def write(self, row: Sequence[Any]) -> None:
        cols = self.dictionary.columns
        if len(row) != len(cols):
            raise ValueError(f"{self.dictionary.name}: expected {len(cols)} values, got {len(row)}")
        self._writer.writerow([format_value(v, c.type) for v, c in zip(row, cols)])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> TableWriter:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def write_table(path: str | Path, dictionary: TableDictionary, rows: Iterable[Sequence[Any]]) -> None:
    with TableWriter(path, dictionary) as w:
        for row in rows:
            w.write(row)


def dictionary_to_element(d: TableDictionary) -> ET.Element:
    root = ET.Element("dictionary", name=d.name)
    for c in d.columns:
        node = ET.SubElement(root, "column", name=c.name, type=c.type)
        if c.description:
            node.text = c.description
    for column, codes in d.codes.items():
        for value, label in sorted(codes.items()):
            ET.SubElement(root, "code", column=column, value=str(value), label=label)
    for note in d.notes:
        ET.SubElement(root, "note").text = note
    return root


def write_dictionary(d: TableDictionary, directory: str | Path) -> Path:
    path = Path(directory) / d.filename
    path.write_bytes(canonical_bytes(dictionary_to_element(d)))
    return path


def read_dictionary(path: str | Path) -> TableDictionary:
    root = ET.parse(path).getroot()
    if root.tag != "dictionary":
        raise TableFormatError(path, None, "not a table dictionary")
    columns = []
    for node in root.findall("column"):
        kind = node.get("type", "string")
        if kind not in COLUMN_TYPES:
            raise TableFormatError(path, node.get("name"), f"unknown column type {kind!r}")
        columns.append(Column(node.get("name", ""), kind, (node.text or "").strip()))
    codes: dict[str, dict[int, str]] = {}
    for node in root.findall("code"):
        codes.setdefault(node.get("column", ""), {})[int(node.get("value", "0"))] = node.get("label", "")
    notes = tuple((n.text or "").strip() for n in root.findall("note"))
    return TableDictionary(root.get("name", ""), tuple(columns), notes, codes)


def read_table(csv_path: str | Path, dictionary: TableDictionary | str | Path) -> list[dict[str, Any]]:
    """Rows of ``csv_path`` as typed dicts, checked against ``dictionary``."""
    if not isinstance(dictionary, TableDictionary):
        dictionary = read_dictionary(dictionary)
    text = Path(csv_path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TableFormatError(csv_path, None, "empty file (no header)") from None
    expected = dictionary.header
    for i, name in enumerate(expected):
        if i >= len(header):
            raise TableFormatError(csv_path, name, "column missing")
        if header[i] != name:
            raise TableFormatError(csv_path, header[i], f"unexpected column, dictionary expects {name!r}")
    if len(header) > len(expected):
        raise TableFormatError(csv_path, header[len(expected)], "column not in dictionary")
    rows = []
    for lineno, raw in enumerate(reader, start=2):
        if len(raw) != len(expected):
            raise TableFormatError(csv_path, None, f"line {lineno}: {len(raw)} fields, expected {len(expected)}")
        row = {}
        for value, col in zip(raw, dictionary.columns):
            try:
                row[col.name] = parse_value(value, col.type)
            except ValueError:
                raise TableFormatError(
                    csv_path, col.name, f"line {lineno}: {value!r} is not of type {col.type}"
                ) from None
        rows.append(row)
    return rows
