"""Planar territory, subregions and the rectangular analysis grid.

All coordinates are planar meters. The CRS code carried by a ``Territory`` is
metadata only and is never used for reprojection.

Tile ids are assigned row-major starting at the lower-left corner of the grid:
``tile_id = row * n_cols + col``. Tiles are half-open ``[x0, x1) x [y0, y1)``,
except that the grid's top and right edges are closed.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

Point = tuple[float, float]
Ring = tuple[Point, ...]

_EPS = 1e-9


class GeometryError(ValueError):
    pass


# -- WKT ----------------------------------------------------------------------

_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TOKEN_RE = re.compile(rf"\s*(?:(?P<num>{_NUM})|(?P<word>[A-Za-z]+)|(?P<sym>[(),]))")


def _tokens(text: str) -> list[str]:
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise GeometryError(f"unexpected character at offset {pos}: {text[pos:pos + 10]!r}")
        out.append(m.group(m.lastgroup))
        pos = m.end()
    return out


class _WktReader:
    def __init__(self, text: str) -> None:
        self.toks = _tokens(text)
        self.i = 0

    def peek(self) -> str | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None:
            raise GeometryError("unexpected end of WKT")
        if expected is not None and tok.upper() != expected:
            raise GeometryError(f"expected {expected!r}, found {tok!r}")
        self.i += 1
        return tok

    def number(self) -> float:
        tok = self.take()
        try:
            value = float(tok)
        except ValueError:
            raise GeometryError(f"expected a coordinate, found {tok!r}") from None
        if not math.isfinite(value):
            raise GeometryError(f"non-finite coordinate {tok!r}")
        return value

    def ring(self) -> Ring:
        self.take("(")
        pts = []
        while True:
            x = self.number()
            y = self.number()
            if self.peek() not in (",", ")"):
                raise GeometryError("only 2-D coordinates are supported")
            pts.append((x, y))
            if self.take() == ")":
                break
        if len(pts) < 4:
            raise GeometryError("a ring needs at least 4 points")
        if pts[0] != pts[-1]:
            raise GeometryError("ring is not closed")
        return tuple(pts)

    def polygon(self) -> tuple[Ring, ...]:
        self.take("(")
        rings = [self.ring()]
        while self.take() == ",":
            rings.append(self.ring())
        return tuple(rings)


@dataclass(frozen=True)
class Region:
    """A polygon or multipolygon: ``parts`` is a tuple of polygons, each a
    tuple of rings (exterior first, then holes)."""

    parts: tuple[tuple[Ring, ...], ...]

    @property
    def rings(self) -> Iterator[Ring]:
        for part in self.parts:
            yield from part

    def edges(self) -> Iterator[tuple[Point, Point]]:
        for ring in self.rings:
            for a, b in zip(ring, ring[1:]):
                yield a, b

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        xs = [p[0] for r in self.rings for p in r]
        ys = [p[1] for r in self.rings for p in r]
        return min(xs), min(ys), max(xs), max(ys)

    @property
    def area(self) -> float:
        total = 0.0
        for part in self.parts:
            total += abs(ring_signed_area(part[0]))
            total -= sum(abs(ring_signed_area(h)) for h in part[1:])
        return total

    def contains(self, pt: Point, boundary: bool = True) -> bool:
        return point_in_region(pt, self, boundary=boundary)

    def to_wkt(self) -> str:
        def ring(r: Ring) -> str:
            return "(" + ", ".join(f"{x:g} {y:g}" for x, y in r) + ")"

        def poly(p: tuple[Ring, ...]) -> str:
            return "(" + ", ".join(ring(r) for r in p) + ")"

        if len(self.parts) == 1:
            return "POLYGON " + poly(self.parts[0])
        return "MULTIPOLYGON (" + ", ".join(poly(p) for p in self.parts) + ")"


def parse_wkt(text: str) -> Region:
    """Read a ``POLYGON`` or ``MULTIPOLYGON`` WKT string."""
    r = _WktReader(text)
    kind = r.take().upper()
    if r.peek() and r.peek().upper() == "EMPTY":
        raise GeometryError("empty geometry")
    if kind == "POLYGON":
        parts = (r.polygon(),)
    elif kind == "MULTIPOLYGON":
        r.take("(")
        polys = [r.polygon()]
        while r.take() == ",":
            polys.append(r.polygon())
        parts = tuple(polys)
    else:
        raise GeometryError(f"unsupported geometry type {kind!r}")
    if r.peek() is not None:
        raise GeometryError(f"trailing tokens after geometry: {r.peek()!r}")
    return Region(parts)


# -- primitives ---------------------------------------------------------------


def ring_signed_area(ring: Sequence[Point]) -> float:
    return 0.5 * math.fsum(
        a[0] * b[1] - b[0] * a[1] for a, b in zip(ring, ring[1:])
    )


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def on_segment(p: Point, a: Point, b: Point, eps: float = _EPS) -> bool:
    length = math.hypot(b[0] - a[0], b[1] - a[1])
    if abs(_cross(a, b, p)) > eps * max(length, 1.0):
        return False
    return (
        min(a[0], b[0]) - eps <= p[0] <= max(a[0], b[0]) + eps
        and min(a[1], b[1]) - eps <= p[1] <= max(a[1], b[1]) + eps
    )


def segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    """True if the open segments properly cross (touching does not count)."""
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    return ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4))


def segments_touch(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    """True if the closed segments share at least one point."""
    if segments_cross(p1, p2, q1, q2):
        return True
    return (
        on_segment(p1, q1, q2)
        or on_segment(p2, q1, q2)
        or on_segment(q1, p1, p2)
        or on_segment(q2, p1, p2)
    )


def point_in_rings(pt: Point, rings: Iterable[Ring], boundary: bool = True) -> bool:
    """Even-odd ray casting over ``rings``; points on an edge count as inside
    when ``boundary`` is true."""
    x, y = pt
    inside = False
    for ring in rings:
        for a, b in zip(ring, ring[1:]):
            if on_segment(pt, a, b):
                return boundary
            if (a[1] > y) != (b[1] > y):
                x_cross = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
                if x < x_cross:
                    inside = not inside
    return inside


def point_in_region(pt: Point, region: Region, boundary: bool = True) -> bool:
    return point_in_rings(pt, region.rings, boundary=boundary)


def is_simple(region: Region) -> bool:
    """No two edges touch except consecutive edges of a ring at their shared vertex."""
    edges: list[tuple[int, int, Point, Point]] = []
    ring_sizes = []
    for ri, ring in enumerate(region.rings):
        ring_sizes.append(len(ring) - 1)
        for k, (a, b) in enumerate(zip(ring, ring[1:])):
            edges.append((ri, k, a, b))
    for i, (ri, ki, a, b) in enumerate(edges):
        for rj, kj, c, d in edges[i + 1:]:
            n = ring_sizes[ri]
            if ri == rj and (kj == ki + 1 or (ki == 0 and kj == n - 1)):
                # consecutive edges: only a collinear fold-back is a defect
                far = d if kj == ki + 1 else c
                near = a if kj == ki + 1 else b
                if segments_cross(a, b, c, d) or on_segment(far, a, b) or on_segment(near, c, d):
                    return False
                continue
            if segments_touch(a, b, c, d):
                return False
    return True


# -- territory ----------------------------------------------------------------


@dataclass(frozen=True)
class Subregion:
    subregion_id: int
    long_name: str
    region: Region


@dataclass(frozen=True)
class Territory:
    boundary: Region
    subregions: tuple[Subregion, ...] = ()
    crs_code: int | None = None

    def __post_init__(self) -> None:
        if self.boundary.area <= 0:
            raise GeometryError("territory boundary has zero area")
        if not is_simple(self.boundary):
            raise GeometryError("territory boundary is not a simple polygon")
        for sub in self.subregions:
            if sub.region.area <= 0:
                raise GeometryError(f"subregion {sub.long_name!r} has zero area")

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return self.boundary.bbox

    def contains(self, pt: Point) -> bool:
        return self.boundary.contains(pt)

    def subregion(self, subregion_id: int) -> Subregion:
        for sub in self.subregions:
            if sub.subregion_id == subregion_id:
                return sub
        raise KeyError(subregion_id)

    def subregion_long_of(self, pt: Point) -> str | None:
        sid = subregion_of(self, pt)
        return None if sid is None else self.subregion(sid).long_name


def subregion_of(territory: Territory, pt: Point) -> int | None:
    """Id of the first-listed subregion containing ``pt`` (borders included), else None."""
    for sub in territory.subregions:
        if sub.region.contains(pt, boundary=True):
            return sub.subregion_id
    return None


# -- grid ---------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    x_origin: float
    y_origin: float
    tile_dim_x: float
    tile_dim_y: float
    n_cols: int
    n_rows: int
    _extent: tuple[float, float] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.tile_dim_x <= 0 or self.tile_dim_y <= 0:
            raise GeometryError("tile dimensions must be positive")
        if self.n_cols < 1 or self.n_rows < 1:
            raise GeometryError("grid needs at least one row and one column")
        object.__setattr__(
            self,
            "_extent",
            (
                self.x_origin + self.n_cols * self.tile_dim_x,
                self.y_origin + self.n_rows * self.tile_dim_y,
            ),
        )

    @property
    def n_tiles(self) -> int:
        return self.n_cols * self.n_rows

    @property
    def tile_ids(self) -> range:
        return range(self.n_tiles)


def build_grid(territory: Territory, tile_dim_x: float, tile_dim_y: float) -> Grid:
    """Smallest grid anchored at the bounding box's lower-left corner covering it."""
    if tile_dim_x <= 0 or tile_dim_y <= 0:
        raise GeometryError("tile dimensions must be positive")
    xmin, ymin, xmax, ymax = territory.bbox
    width, height = xmax - xmin, ymax - ymin
    if width <= 0 or height <= 0:
        raise GeometryError("degenerate territory bounding box")
    # rounding keeps exact divisions such as 100/10 from ceiling up to 11
    n_cols = max(1, math.ceil(round(width / tile_dim_x, 9)))
    n_rows = max(1, math.ceil(round(height / tile_dim_y, 9)))
    return Grid(xmin, ymin, tile_dim_x, tile_dim_y, n_cols, n_rows)


def tile_of(grid: Grid, pt: Point) -> int | None:
    """Row-major tile id of ``pt``, or None when it lies outside the grid."""
    x, y = pt
    x_end, y_end = grid._extent
    if not (grid.x_origin <= x <= x_end and grid.y_origin <= y <= y_end):
        return None
    col = min(int((x - grid.x_origin) // grid.tile_dim_x), grid.n_cols - 1)
    row = min(int((y - grid.y_origin) // grid.tile_dim_y), grid.n_rows - 1)
    return row * grid.n_cols + col


def tile_center(grid: Grid, tile_id: int) -> Point:
    if not 0 <= tile_id < grid.n_tiles:
        raise GeometryError(f"tile id {tile_id} outside 0..{grid.n_tiles - 1}")
    row, col = divmod(tile_id, grid.n_cols)
    return (
        grid.x_origin + (col + 0.5) * grid.tile_dim_x,
        grid.y_origin + (row + 0.5) * grid.tile_dim_y,
    )
