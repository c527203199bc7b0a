"""Group configuration shared by clients, server, service and simulator."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from . import packing
from .schedule import Schedule, ScheduleKind

# Total member slots a group may ever assign (indices are never reused).
N_MAX = 120

MIN_ROUND_PERIOD_MS = 100


class Mode(str, Enum):
    SEMIHONEST = "semihonest"
    MALICIOUS = "malicious"


def packed_index_limit(windows: int) -> int:
    """Largest member index whose packed trace exponent still fits the ring.

    A charge of lane k in window t shows up in the trace aggregate as
    2^(6t+k) * 2^(21k) * 2^i; the worst case (t = windows-1, k = 5) must stay
    below 2^128.
    """
    worst = (packing.SLOTS * (windows - 1) + 5) + packing.SLOT_BITS * 5
    return 128 - worst - 1


@dataclass(frozen=True)
class GroupConfig:
    n: int
    mode: Mode = Mode.SEMIHONEST
    schedule: Schedule = field(default_factory=Schedule)
    round_period_ms: int = 1000
    offline_substitution: bool = True
    announcements: bool = False
    # When set, the scheduler skips rounds for which nobody submitted anything
    # instead of running an all-idle round.
    on_demand_rounds: bool = False

    def __post_init__(self):
        if not 2 <= self.n <= N_MAX:
            raise ValueError(f"group size {self.n} outside [2, {N_MAX}]")
        if self.round_period_ms < MIN_ROUND_PERIOD_MS:
            raise ValueError(f"round period below {MIN_ROUND_PERIOD_MS} ms")
        if self.schedule.kind is ScheduleKind.PACKED:
            if self.mode is not Mode.SEMIHONEST:
                raise ValueError("packed rounds are a semihonest-mode feature")
            limit = packed_index_limit(self.schedule.windows)
            if self.n > limit:
                raise ValueError(
                    f"packed group of {self.n} members would overflow trace "
                    f"exponents; limit is {limit} for {self.schedule.windows} windows"
                )

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "mode": self.mode.value,
            "schedule": self.schedule.to_json(),
            "round_period_ms": self.round_period_ms,
            "offline_substitution": self.offline_substitution,
            "announcements": self.announcements,
            "on_demand_rounds": self.on_demand_rounds,
        }

    @classmethod
    def from_json(cls, data: dict) -> "GroupConfig":
        return cls(
            n=int(data["n"]),
            mode=Mode(data.get("mode", "semihonest")),
            schedule=Schedule.from_json(data.get("schedule", {})),
            round_period_ms=int(data.get("round_period_ms", 1000)),
            offline_substitution=bool(data.get("offline_substitution", True)),
            announcements=bool(data.get("announcements", False)),
            on_demand_rounds=bool(data.get("on_demand_rounds", False)),
        )
