"""Device attachment and network event records."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from mnsim.config import AntennaConfig
from mnsim.geometry import Grid, Point, tile_of
from mnsim.radio import dominance_from_strength, signal_strength_dbm

# metres of one Timing Advance step
TA_UNIT_M = {"4G": 78.12, "3G": 554.0}


class EventCode(enum.IntEnum):
    ATTACH = 0
    UPDATE = 1
    DETACH = 2
    HANDOVER = 3


@dataclass(frozen=True)
class EventRecord:
    t: int
    device_id: int
    antenna_id: int
    event_code: EventCode
    tech: str
    timing_advance: int
    x: float
    y: float
    tile_id: int | None


@dataclass
class AttachmentState:
    connections: dict[int, int] = field(default_factory=dict)
    attached: dict[int, int] = field(default_factory=dict)

    def copy(self) -> AttachmentState:
        return AttachmentState(dict(self.connections), dict(self.attached))

    def load(self, antenna_id: int) -> int:
        return self.connections.get(antenna_id, 0)

    def admit(self, device_id: int, antenna_id: int) -> None:
        self.attached[device_id] = antenna_id
        self.connections[antenna_id] = self.load(antenna_id) + 1

    def release(self, device_id: int) -> int | None:
        antenna_id = self.attached.pop(device_id, None)
        if antenna_id is not None:
            self.connections[antenna_id] -= 1
            if self.connections[antenna_id] == 0:
                del self.connections[antenna_id]
        return antenna_id


def timing_advance(distance_m: float, tech: str = "4G") -> int:
    """floor(distance / unit), with the invariant ``TA*u <= d < (TA+1)*u`` enforced
    in the same floating-point arithmetic that checks it."""
    if distance_m < 0:
        raise ValueError("distance must be non-negative")
    unit = TA_UNIT_M[tech]
    ta = math.floor(distance_m / unit)
    while ta > 0 and ta * unit > distance_m:
        ta -= 1
    while (ta + 1) * unit <= distance_m:
        ta += 1
    return ta


def best_antenna(
    device_pos: Point,
    antennas: Iterable[AntennaConfig],
    state: AttachmentState,
) -> int | None:
    """Highest-dominance antenna that meets both thresholds and has spare capacity.

    Ties go to the lower antenna id.
    """
    best: tuple[float, int] | None = None
    for antenna in antennas:
        if state.load(antenna.antenna_id) >= antenna.max_connections:
            continue
        strength = signal_strength_dbm(antenna, device_pos)
        if strength < antenna.min_strength_dbm:
            continue
        dominance = dominance_from_strength(antenna, strength)
        if dominance < antenna.min_dominance:
            continue
        key = (-dominance, antenna.antenna_id)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def tick_events(
    devices: Sequence[tuple[int, Point]],
    antennas: Mapping[int, AntennaConfig] | Iterable[AntennaConfig],
    state: AttachmentState,
    t: int,
    *,
    tech: str = "4G",
    grid: Grid | None = None,
) -> tuple[list[EventRecord], AttachmentState]:
    """Attach, update, hand over or detach every device for time ``t``.

    Devices are processed in ascending id, each releasing its current slot
    before competing for one, so capacity contention is deterministic. The
    input ``state`` is not modified.
    """
    if not isinstance(antennas, Mapping):
        antennas = {a.antenna_id: a for a in antennas}
    ordered = [antennas[k] for k in sorted(antennas)]
    new = state.copy()
    events: list[EventRecord] = []
    for device_id, pos in sorted(devices, key=lambda d: d[0]):
        previous = new.release(device_id)
        chosen = best_antenna(pos, ordered, new)
        if chosen is not None:
            new.admit(device_id, chosen)
        if chosen is None and previous is None:
            continue
        if chosen is None:
            code, ref = EventCode.DETACH, previous
        elif previous is None:
            code, ref = EventCode.ATTACH, chosen
        elif previous == chosen:
            code, ref = EventCode.UPDATE, chosen
        else:
            code, ref = EventCode.HANDOVER, chosen
        antenna = antennas[ref]
        events.append(
            EventRecord(
                t=t,
                device_id=device_id,
                antenna_id=ref,
                event_code=code,
                tech=tech,
                timing_advance=timing_advance(math.dist(antenna.position, pos), tech),
                x=pos[0],
                y=pos[1],
                tile_id=tile_of(grid, pos) if grid is not None else None,
            )
        )
    return events, new
