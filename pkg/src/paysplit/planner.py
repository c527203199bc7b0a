"""Turning a cent amount into a sequence of round participations.

A transfer never states its amount; it is the sum of the public round values
of the rounds the payer participates in.  The three schedules give three
plans:

* unit: one round per cent.
* cycle of powers: charge in the rounds whose value is a set bit of the
  amount; an amount of bit length L completes within the first L rounds of a
  cycle pass.  Bits above the largest cycle value fall back to repeated
  charges of the top value.
* packed: six bits move per round, so bit b rides lane b % 6 of window
  b // 6; the span is ceil(L / 6) rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import packing
from .schedule import Schedule, ScheduleKind


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class PlanStep:
    """One participating round: its position in the schedule and the payload."""

    cycle_pos: int                     # round number modulo the schedule period
    value: int                         # cents moved by this step
    lanes: tuple[int, ...] = ()        # packed: lanes charged in this window


@dataclass(frozen=True)
class RoundPlan:
    amount_cents: int
    target: int
    steps: tuple[PlanStep, ...]
    rounds_to_complete: int            # span from a cycle boundary, idle waits included
    active_rounds: int                 # rounds actually carrying a charge

    def total(self) -> int:
        return sum(s.value for s in self.steps)


def plan_transfer(amount_cents: int, target: int, sched: Schedule) -> RoundPlan:
    if amount_cents <= 0:
        raise PlanError("amount must be positive cents")
    if sched.kind is ScheduleKind.UNIT:
        steps = tuple(PlanStep(0, 1) for _ in range(amount_cents))
        return RoundPlan(amount_cents, target, steps, amount_cents, amount_cents)
    if sched.kind is ScheduleKind.CYCLE:
        return _plan_cycle(amount_cents, target, sched)
    return _plan_packed(amount_cents, target, sched)


def _plan_cycle(amount: int, target: int, sched: Schedule) -> RoundPlan:
    period = len(sched.cycle)
    # number of times each cycle position must be charged
    counts = [0] * period
    remaining = amount
    for pos in sorted(range(period), key=lambda p: -sched.cycle[p]):
        v = sched.cycle[pos]
        counts[pos] += remaining // v
        remaining %= v
    if remaining:
        raise PlanError(f"schedule cannot express {amount} cents")
    steps = []
    pos = 0
    guard = 0
    while any(counts):
        if counts[pos % period]:
            counts[pos % period] -= 1
            steps.append(PlanStep(pos % period, sched.cycle[pos % period]))
        pos += 1
        guard += 1
        if guard > period * (amount + 1):
            raise PlanError("plan does not converge")
    return RoundPlan(amount, target, tuple(steps), pos, len(steps))


def _plan_packed(amount: int, target: int, sched: Schedule) -> RoundPlan:
    top = packing.SLOTS * sched.windows
    if amount >= 1 << top:
        raise PlanError(f"amount {amount} exceeds packed window capacity")
    by_window: dict[int, list[int]] = {}
    for b in range(amount.bit_length()):
        if amount >> b & 1:
            by_window.setdefault(b // packing.SLOTS, []).append(b % packing.SLOTS)
    steps = tuple(
        PlanStep(
            cycle_pos=t,
            value=sum(1 << (packing.SLOTS * t + k) for k in lanes),
            lanes=tuple(lanes),
        )
        for t, lanes in sorted(by_window.items())
    )
    span = max(by_window) + 1 if by_window else 0
    return RoundPlan(amount, target, steps, span, len(steps))


def rounds_for_amount(amount_cents: int, sched: Schedule) -> int:
    """Round span of a single transfer under a schedule (figure-of-merit)."""
    return plan_transfer(amount_cents, 1, sched).rounds_to_complete
