"""Synthetic population and per-tick movement.

Three movement patterns are supported:

* ``RandomWalkClosedMap``: a fresh uniform heading every tick, reflected off
  the territory boundary.
* ``HomeWork``: straight-line commuting between home and work, dwelling at
  each end for ``time_at_home`` / ``time_at_work`` seconds.
* ``HomeWorkManhattan``: the same schedule, routed along lattice lines
  (x first, then y).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Union

import numpy as np

from mnsim.geometry import Point, Territory, segments_cross

if TYPE_CHECKING:
    from mnsim.config import PersonsConfig, SimulationConfig

# SeedSequence spawn keys; one independent stream per purpose and per person
STREAM_POPULATION = 0
STREAM_MOVEMENT = 1
STREAM_DEVICES = 2

MAX_SAMPLING_ATTEMPTS = 10_000
MAX_REFLECTIONS = 16


@dataclass(frozen=True)
class RandomWalkClosedMap:
    pass


@dataclass(frozen=True)
class HomeWork:
    pass


@dataclass(frozen=True)
class HomeWorkManhattan:
    x_step: float
    y_step: float
    x_origin: float = 0.0
    y_origin: float = 0.0

    def __post_init__(self) -> None:
        if self.x_step <= 0 or self.y_step <= 0:
            raise ValueError("manhattan lattice steps must be positive")


MovementPattern = Union[RandomWalkClosedMap, HomeWork, HomeWorkManhattan]


class Phase(str, enum.Enum):
    AT_HOME = "at_home"
    TO_WORK = "to_work"
    AT_WORK = "at_work"
    TO_HOME = "to_home"


_NEXT_PHASE = {
    Phase.AT_HOME: Phase.TO_WORK,
    Phase.TO_WORK: Phase.AT_WORK,
    Phase.AT_WORK: Phase.TO_HOME,
    Phase.TO_HOME: Phase.AT_HOME,
}


@dataclass(frozen=True)
class Person:
    person_id: int
    home: Point
    work: Point
    speed: float
    device_ids: tuple[int, ...]
    position: Point
    phase: Phase = Phase.AT_HOME
    dwell_remaining: float = 0.0
    time_at_home: float = 0.0
    time_at_work: float = 0.0
    route: tuple[Point, ...] = ()
    leg: int = 0


class MobilityError(ValueError):
    pass


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key)``; identical inputs give identical streams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def movement_rng(seed: int, person_id: int) -> np.random.Generator:
    return stream(seed, STREAM_MOVEMENT, person_id)


# -- routes -------------------------------------------------------------------


def _snap(value: float, origin: float, step: float) -> float:
    return origin + math.floor((value - origin) / step + 0.5) * step


def plan_route(start: Point, end: Point, pattern: MovementPattern) -> tuple[Point, ...]:
    """Waypoints from ``start`` to ``end`` (both included, no repeats).

    The Manhattan route moves vertically onto the nearest horizontal lattice
    line, along it to the vertical lattice line nearest ``end``, along that to
    ``end``'s y, then horizontally onto ``end``.
    """
    if isinstance(pattern, HomeWorkManhattan):
        y_line = _snap(start[1], pattern.y_origin, pattern.y_step)
        x_line = _snap(end[0], pattern.x_origin, pattern.x_step)
        pts = [start, (start[0], y_line), (x_line, y_line), (x_line, end[1]), end]
    else:
        pts = [start, end]
    out = [pts[0]]
    for p in pts[1:]:
        if p != out[-1]:
            out.append(p)
    return tuple(out)


def route_inside(territory: Territory, route: tuple[Point, ...]) -> bool:
    if not all(territory.contains(p) for p in route):
        return False
    edges = list(territory.boundary.edges())
    for a, b in zip(route, route[1:]):
        if any(segments_cross(a, b, c, d) for c, d in edges):
            return False
        if not territory.contains(((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)):
            return False
    return True


def route_length(route: tuple[Point, ...]) -> float:
    return sum(math.dist(a, b) for a, b in zip(route, route[1:]))


# -- population ---------------------------------------------------------------


def sample_point(territory: Territory, rng: np.random.Generator) -> Point:
    """Uniform point in the territory interior by rejection from its bounding box."""
    xmin, ymin, xmax, ymax = territory.bbox
    for _ in range(MAX_SAMPLING_ATTEMPTS):
        p = (float(rng.uniform(xmin, xmax)), float(rng.uniform(ymin, ymax)))
        if territory.boundary.contains(p, boundary=False):
            return p
    raise MobilityError("could not sample a point inside the territory")


def draw_device_count(prob_devices: tuple[float, float, float], u: float) -> int:
    p0, p1, _ = prob_devices
    if u < p0:
        return 0
    if u < p0 + p1:
        return 1
    return 2


def synthesize_population(
    persons_cfg: PersonsConfig,
    sim_cfg: SimulationConfig,
    territory: Territory,
    rng: np.random.Generator,
) -> list[Person]:
    """Draw ``num_persons`` persons with homes, workplaces, speeds and devices.

    Person ids run from 1; device ids are global and run from 1 in person
    order. For the commuting patterns the workplace is redrawn until both
    commute routes stay inside the territory.
    """
    if territory.boundary.area <= 0:
        raise MobilityError("territory has zero area")
    pattern = sim_cfg.movement_pattern
    persons: list[Person] = []
    next_device = 1
    for pid in range(1, persons_cfg.num_persons + 1):
        home = sample_point(territory, rng)
        for _ in range(MAX_SAMPLING_ATTEMPTS):
            work = sample_point(territory, rng)
            if isinstance(pattern, RandomWalkClosedMap):
                break
            if route_inside(territory, plan_route(home, work, pattern)) and route_inside(
                territory, plan_route(work, home, pattern)
            ):
                break
        else:
            raise MobilityError(f"no valid commute found for person {pid}")
        n_devices = draw_device_count(sim_cfg.prob_devices, float(rng.random()))
        by_car = float(rng.random()) < persons_cfg.prob_car
        devices = tuple(range(next_device, next_device + n_devices))
        next_device += n_devices
        persons.append(
            Person(
                person_id=pid,
                home=home,
                work=work,
                speed=persons_cfg.speed_car if by_car else persons_cfg.speed_walk,
                device_ids=devices,
                position=home,
                phase=Phase.AT_HOME,
                dwell_remaining=persons_cfg.time_at_home,
                time_at_home=persons_cfg.time_at_home,
                time_at_work=persons_cfg.time_at_work,
            )
        )
    return persons


# -- movement -----------------------------------------------------------------


def _first_hit(
    start: Point, end: Point, territory: Territory
) -> tuple[float, tuple[Point, Point]] | None:
    """Smallest parameter s in (0, 1] where start->end meets a boundary edge."""
    best = None
    rx, ry = end[0] - start[0], end[1] - start[1]
    for a, b in territory.boundary.edges():
        sx, sy = b[0] - a[0], b[1] - a[1]
        denom = rx * sy - ry * sx
        if denom == 0:
            continue
        qx, qy = a[0] - start[0], a[1] - start[1]
        s = (qx * sy - qy * sx) / denom
        u = (qx * ry - qy * rx) / denom
        if 1e-9 < s <= 1.0 and 0.0 <= u <= 1.0 and (best is None or s < best[0]):
            best = (s, (a, b))
    return best


def _random_walk(person: Person, territory: Territory, dt: float, rng: np.random.Generator) -> Person:
    heading = float(rng.uniform(0.0, 2.0 * math.pi))
    dx, dy = math.cos(heading), math.sin(heading)
    pos = person.position
    remaining = person.speed * dt
    for _ in range(MAX_REFLECTIONS):
        target = (pos[0] + dx * remaining, pos[1] + dy * remaining)
        hit = _first_hit(pos, target, territory)
        if hit is None:
            pos = target
            break
        s, (a, b) = hit
        pos = (pos[0] + dx * remaining * s, pos[1] + dy * remaining * s)
        remaining *= 1.0 - s
        ex, ey = b[0] - a[0], b[1] - a[1]
        norm = math.hypot(ex, ey)
        nx, ny = -ey / norm, ex / norm
        dot = dx * nx + dy * ny
        dx, dy = dx - 2 * dot * nx, dy - 2 * dot * ny
    if not territory.contains(pos):
        # numerical corner cases: stay put rather than leave the map
        pos = person.position
    return replace(person, position=pos)


def _travel(pos: Point, route: tuple[Point, ...], leg: int, distance: float) -> tuple[Point, int, float]:
    """Move up to ``distance`` along ``route`` from ``pos`` heading to ``route[leg]``.

    Returns the new position, next leg index and the distance actually covered.
    """
    covered = 0.0
    while leg < len(route):
        target = route[leg]
        gap = math.dist(pos, target)
        if gap <= distance - covered:
            covered += gap
            pos = target
            leg += 1
            continue
        frac = (distance - covered) / gap
        pos = (pos[0] + (target[0] - pos[0]) * frac, pos[1] + (target[1] - pos[1]) * frac)
        covered = distance
        break
    return pos, leg, covered


def _commute(person: Person, pattern: MovementPattern, dt: float) -> Person:
    p = person
    remaining = float(dt)
    idle_transitions = 0
    while remaining > 0 and idle_transitions < 4:
        if p.phase in (Phase.AT_HOME, Phase.AT_WORK):
            if p.dwell_remaining > remaining:
                p = replace(p, dwell_remaining=p.dwell_remaining - remaining)
                remaining = 0.0
                break
            spent = p.dwell_remaining
            remaining -= spent
            nxt = _NEXT_PHASE[p.phase]
            dest = p.work if nxt is Phase.TO_WORK else p.home
            p = replace(p, phase=nxt, dwell_remaining=0.0, route=plan_route(p.position, dest, pattern), leg=1)
        else:
            pos, leg, covered = _travel(p.position, p.route, p.leg, p.speed * remaining)
            spent = covered / p.speed
            if leg >= len(p.route):
                remaining -= spent
                arrived = Phase.AT_WORK if p.phase is Phase.TO_WORK else Phase.AT_HOME
                dwell = p.time_at_work if arrived is Phase.AT_WORK else p.time_at_home
                p = replace(p, position=pos, leg=leg, phase=arrived, dwell_remaining=dwell, route=())
            else:
                p = replace(p, position=pos, leg=leg)
                remaining = 0.0
        idle_transitions = idle_transitions + 1 if spent == 0 else 0
    return p


def step(
    person: Person,
    pattern: MovementPattern,
    territory: Territory,
    dt: float,
    rng: np.random.Generator,
) -> Person:
    """Advance ``person`` by ``dt`` seconds and return the updated person."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(pattern, RandomWalkClosedMap):
        return _random_walk(person, territory, dt, rng)
    return _commute(person, pattern, dt)
