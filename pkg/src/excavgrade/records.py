"""Dig events and load-haul cycle records."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DataError


@dataclass(frozen=True)
class DigEvent:
    """Recorded bucket dig. ``position`` is None when the sensor dropped out."""

    dig_event_id: int
    position: tuple[float, float, float] | None
    bench_id: str
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if self.position is not None:
            if len(self.position) != 3 or not all(math.isfinite(v) for v in self.position):
                raise DataError(f"dig {self.dig_event_id}: position must be 3 finite values")
        if not math.isfinite(self.timestamp):
            raise DataError(f"dig {self.dig_event_id}: non-finite timestamp")


@dataclass(frozen=True)
class HaulCycle:
    """Links one bucket to the truck it was loaded into and that truck's dump."""

    dig_event_id: int
    truck_id: str
    dump_id: str
    timestamp: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.timestamp) and self.timestamp >= 0):
            raise DataError(f"cycle for dig {self.dig_event_id}: timestamp must be >= 0")


def sort_key(value) -> tuple:
    """Order ids numerically when they look like integers, else lexically."""
    s = str(value)
    try:
        return (0, int(s), s)
    except ValueError:
        return (1, 0, s)
