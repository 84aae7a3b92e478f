"""Signal strength, signal dominance and coverage of radio cells.

Propagation is the log-distance model with a 1 m reference distance::

    S(d) = 10 log10(1000 P) - 10 gamma log10(max(d, 1)) - A_dir(bearing)

in dBm for an emission power ``P`` in watts, floored at -300 dBm. Dominance is
the logistic transform ``1 / (1 + exp(-steep * (S - mid)))``.

Bearings are measured clockwise from north (+y), matching antenna azimuths.
Height, tilt and elevation are carried on the antenna but do not enter this
2-D model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from mnsim.config import AntennaConfig
from mnsim.geometry import Grid, Point, tile_center

REFERENCE_DISTANCE_M = 1.0
STRENGTH_FLOOR_DBM = -300.0
HALF_POWER_WIDTH_DEG = 70.0
MAX_ATTENUATION_DB = 30.0


@dataclass(frozen=True)
class SignalMeasure:
    antenna_id: int
    tile_id: int
    strength_dbm: float
    dominance: float


@dataclass(frozen=True)
class CoverageCell:
    antenna_id: int
    covered_tiles: frozenset[int]


def bearing_deg(origin: Point, point: Point) -> float:
    """Compass bearing of ``point`` seen from ``origin``, in [0, 360)."""
    angle = math.degrees(math.atan2(point[0] - origin[0], point[1] - origin[1]))
    return angle % 360.0


def angular_difference(a: float, b: float) -> float:
    diff = abs(a - b) % 360.0
    return min(diff, 360.0 - diff)


def directional_attenuation(antenna: AntennaConfig, bearing: float) -> float:
    if not antenna.is_directional:
        return 0.0
    delta = angular_difference(bearing, antenna.azimuth_deg or 0.0)
    return min(12.0 * (delta / HALF_POWER_WIDTH_DEG) ** 2, MAX_ATTENUATION_DB)


def signal_strength_dbm(antenna: AntennaConfig, point: Point) -> float:
    d = math.dist(antenna.position, point)
    strength = 10.0 * math.log10(1000.0 * antenna.power_w)
    strength -= 10.0 * antenna.path_loss_exponent * math.log10(
        max(d, REFERENCE_DISTANCE_M) / REFERENCE_DISTANCE_M
    )
    if d > 0:
        strength -= directional_attenuation(antenna, bearing_deg(antenna.position, point))
    return max(strength, STRENGTH_FLOOR_DBM)


def dominance_from_strength(antenna: AntennaConfig, strength_dbm: float) -> float:
    z = antenna.dominance_steepness * (strength_dbm - antenna.dominance_midpoint_dbm)
    # branch keeps exp() from overflowing for large |z|
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def signal_dominance(antenna: AntennaConfig, point: Point) -> float:
    return dominance_from_strength(antenna, signal_strength_dbm(antenna, point))


def connects(antenna: AntennaConfig, point: Point) -> bool:
    """Whether both connection thresholds hold at ``point``."""
    strength = signal_strength_dbm(antenna, point)
    return (
        strength >= antenna.min_strength_dbm
        and dominance_from_strength(antenna, strength) >= antenna.min_dominance
    )


def compute_signal_measures(antennas: Iterable[AntennaConfig], grid: Grid) -> list[SignalMeasure]:
    """One measure per antenna and tile, taken at the tile center, sorted by (antenna, tile)."""
    centers = [tile_center(grid, t) for t in grid.tile_ids]
    out = []
    for antenna in sorted(antennas, key=lambda a: a.antenna_id):
        for tile_id, center in enumerate(centers):
            s = signal_strength_dbm(antenna, center)
            out.append(SignalMeasure(antenna.antenna_id, tile_id, s, dominance_from_strength(antenna, s)))
    return out


def compute_coverage(antennas: Iterable[AntennaConfig], grid: Grid) -> list[CoverageCell]:
    """Tiles whose center satisfies the antenna's strength AND dominance thresholds."""
    centers = [tile_center(grid, t) for t in grid.tile_ids]
    return [
        CoverageCell(
            antenna.antenna_id,
            frozenset(t for t, c in enumerate(centers) if connects(antenna, c)),
        )
        for antenna in sorted(antennas, key=lambda a: a.antenna_id)
    ]
