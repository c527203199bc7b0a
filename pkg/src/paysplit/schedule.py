"""Public round-value schedules.

Every member and the server agree on the schedule at setup; the value of a
round is public (the amounts stay hidden because participation is hidden, not
the per-round quantum).  Three kinds:

* unit: every round moves one cent per charge.
* cycle: round m carries value cycle[m % len(cycle)]; the default cycle walks
  the powers of two 2^0..2^16 so any amount below $1310.72 finishes within
  one pass.
* packed: whole-word value stays 1 and six 21-bit lanes carry the public
  per-lane values 2^(6t+k) for lane k, with the bit window t cycling.  A
  packed round moves up to six charge bits at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from . import packing

DEFAULT_CYCLE = tuple(1 << k for k in range(17))

PACKED_WINDOWS = 3  # lane bit windows t = 0..2 cover amount bits 0..17


class ScheduleKind(str, Enum):
    UNIT = "unit"
    CYCLE = "cycle"
    PACKED = "packed"


@dataclass(frozen=True)
class Schedule:
    kind: ScheduleKind = ScheduleKind.UNIT
    cycle: tuple[int, ...] = (1,)
    windows: int = PACKED_WINDOWS

    def __post_init__(self):
        if self.kind is ScheduleKind.CYCLE:
            if not self.cycle or any(v < 1 for v in self.cycle):
                raise ValueError("cycle values must be positive")
        if self.kind is ScheduleKind.PACKED and not 1 <= self.windows <= 4:
            raise ValueError("packed window count out of range")

    def round_value(self, m: int) -> int:
        """Whole-word multiplier the server applies in round m."""
        if self.kind is ScheduleKind.CYCLE:
            return self.cycle[m % len(self.cycle)]
        return 1

    def window(self, m: int) -> int:
        return m % self.windows

    def lane_values(self, m: int) -> tuple[int, ...]:
        """Packed rounds: public cent value carried by each of the six lanes."""
        if self.kind is not ScheduleKind.PACKED:
            raise ValueError("lane values only defined for packed schedules")
        t = self.window(m)
        return tuple(1 << (packing.SLOTS * t + k) for k in range(packing.SLOTS))

    def packed_unit(self, m: int) -> int:
        """The idle cover word of a packed round: every lane at its value."""
        vals = self.lane_values(m)
        return sum(v << (packing.SLOT_BITS * k) for k, v in enumerate(vals))

    def max_value(self) -> int:
        if self.kind is ScheduleKind.CYCLE:
            return max(self.cycle)
        if self.kind is ScheduleKind.PACKED:
            return 1 << (packing.SLOTS * self.windows - 1)
        return 1

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "cycle": list(self.cycle), "windows": self.windows}

    @classmethod
    def from_json(cls, data: dict) -> "Schedule":
        return cls(
            kind=ScheduleKind(data.get("kind", "unit")),
            cycle=tuple(data.get("cycle", [1])),
            windows=int(data.get("windows", PACKED_WINDOWS)),
        )


def unit_schedule() -> Schedule:
    return Schedule(ScheduleKind.UNIT)


def powers_schedule(cycle: tuple[int, ...] = DEFAULT_CYCLE) -> Schedule:
    return Schedule(ScheduleKind.CYCLE, cycle=cycle)


def packed_schedule(windows: int = PACKED_WINDOWS) -> Schedule:
    return Schedule(ScheduleKind.PACKED, windows=windows)
