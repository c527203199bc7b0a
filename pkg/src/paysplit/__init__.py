"""Privacy-preserving payment splitting over an untrusted aggregation server.

Core protocol lives in :mod:`paysplit.client` and :mod:`paysplit.server`;
:mod:`paysplit.service` hosts groups over HTTP, :mod:`paysplit.sdk` and
:mod:`paysplit.cli` drive a member against such a service.  The simulator
and benchmarks are under :mod:`paysplit.sim`.
"""

from . import client, masks, packing, planner, ring, schedule, server, wire
from .config import N_MAX, GroupConfig, Mode
from .masks import GroupSecret
from .schedule import (
    Schedule,
    ScheduleKind,
    packed_schedule,
    powers_schedule,
    unit_schedule,
)

__all__ = [
    "client",
    "masks",
    "packing",
    "planner",
    "ring",
    "schedule",
    "server",
    "wire",
    "GroupConfig",
    "Mode",
    "N_MAX",
    "GroupSecret",
    "Schedule",
    "ScheduleKind",
    "unit_schedule",
    "powers_schedule",
    "packed_schedule",
]
