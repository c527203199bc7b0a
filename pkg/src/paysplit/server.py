"""Aggregation server: blind sums over masked vectors, no cryptography.

The server never touches a key.  Per round it scales each submitted vector by
the public round value, adds the vectors entrywise into the balance vector,
subtracts the setup constant ``a`` from every active entry, and publishes the
three aggregates each client checks:

    v' = sum of all scaled entries          (integrity poll)
    c  = sum_i (w*x_{i,i} - w*a) * 2^i      (trace aggregate over own cells)
    b_l = running balance entry of member l

Everything here is plain ring arithmetic on ints; the masks cancel only on
the clients.  Submissions are retained for a bounded window so misbehavior
sums and framing disputes can be answered later, and every round appends a
log record from which the balance vector can be replayed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Iterable, Mapping, Sequence

from . import ring
from .config import N_MAX

# Rounds for which raw per-cell submissions stay available to disputes.
CELL_RETENTION_ROUNDS = 1024


class Status(IntEnum):
    OK = 0
    INTEGRITY_ROLLBACK = 1
    OFFLINE_ROSTER_ATTACHED = 2
    SETTLE_IN_PROGRESS = 3
    MEMBERSHIP_CHANGED = 4


class ServerError(Exception):
    pass


@dataclass
class MemberRecord:
    index: int
    join_round: int
    leave_round: int | None = None

    def active_at(self, m: int) -> bool:
        return self.join_round <= m and (self.leave_round is None or m < self.leave_round)


@dataclass
class RoundRecord:
    """One processed round, sufficient to replay balances and serve disputes."""

    round_no: int
    value: int
    status: Status
    roster: tuple[int, ...]
    offline: tuple[int, ...]
    vec_sum: tuple[int, ...]          # scaled column sums, aligned to roster
    v_prime: int
    c: int
    member_sums: dict[int, int]       # raw (unscaled) per-submitter vector sums
    events: tuple[str, ...] = ()
    rolled_back: bool = False
    cells: dict[int, tuple[int, ...]] | None = None  # raw submissions, pruned
    announce_sum: int | None = None   # aggregate of the amount-announcement words


@dataclass
class RoundDigestRecord:
    """What one member fetches after a round: 52 bytes on the wire."""

    round_no: int
    v_prime: int
    c: int
    b_entry: int
    status: Status


@dataclass
class ServerGroupState:
    group_id: str
    a: int                            # setup constant, echoed to joiners
    members: dict[int, MemberRecord] = field(default_factory=dict)
    balances: dict[int, int] = field(default_factory=dict)
    next_round: int = 0
    next_index: int = 1
    log: list[RoundRecord] = field(default_factory=list)
    pending_events: list[str] = field(default_factory=list)
    settling: bool = False

    def roster(self, m: int | None = None) -> tuple[int, ...]:
        at = self.next_round if m is None else m
        return tuple(sorted(i for i, rec in self.members.items() if rec.active_at(at)))

    def record(self, m: int) -> RoundRecord:
        for rec in reversed(self.log):
            if rec.round_no == m:
                return rec
        raise ServerError(f"round {m} not in log")


def server_setup(group_id: str, n: int, a: int) -> ServerGroupState:
    """Create a group of n members with indices 1..n and zero balances.

    ``a`` is whatever the group hands over at setup: the all-ones unit in
    semihonest mode, the masked tagging constant in malicious mode.  The
    server just stores and reuses it; it cannot tell the difference.
    """
    if not 2 <= n <= N_MAX:
        raise ServerError(f"group size {n} outside [2, {N_MAX}]")
    state = ServerGroupState(group_id=group_id, a=a & ring.MASK)
    for i in range(1, n + 1):
        state.members[i] = MemberRecord(index=i, join_round=0)
        state.balances[i] = 0
    state.next_index = n + 1
    return state


def process_round(
    state: ServerGroupState,
    submissions: Mapping[int, Sequence[int]],
    *,
    value: int = 1,
    substitute_offline: bool = True,
    announcements: Mapping[int, int] | None = None,
) -> RoundRecord:
    """Aggregate one round and append its log record.

    Missing submitters are substituted with the synthetic vector a*e_i when
    offline handling is on; otherwise the round refuses to run.  Announcement
    words, when a group uses them, are just ring words summed blindly.
    """
    if value < 1:
        raise ServerError("round value must be positive")
    m = state.next_round
    roster = state.roster(m)
    n = len(roster)
    pos = {idx: k for k, idx in enumerate(roster)}

    unknown = set(submissions) - set(roster)
    if unknown:
        raise ServerError(f"submissions from non-active indices {sorted(unknown)}")
    offline = tuple(i for i in roster if i not in submissions)
    if offline and not substitute_offline:
        raise ServerError(f"round {m} missing submissions from {list(offline)}")

    a = state.a
    wa = (value * a) & ring.MASK
    col = [0] * n
    c = 0
    member_sums: dict[int, int] = {}
    cells: dict[int, tuple[int, ...]] = {}

    for i in roster:
        if i in submissions:
            vec = submissions[i]
            if len(vec) != n:
                raise ServerError(
                    f"submission from {i} has {len(vec)} entries, roster has {n}"
                )
            vec = [x & ring.MASK for x in vec]
        else:
            vec = [0] * n
            vec[pos[i]] = a
        cells[i] = tuple(vec)
        member_sums[i] = sum(vec) & ring.MASK
        for k, x in enumerate(vec):
            col[k] += value * x
        c += ((value * vec[pos[i]]) - wa) << i

    col = [x & ring.MASK for x in col]
    v_prime = sum(col) & ring.MASK
    c &= ring.MASK

    for i in roster:
        state.balances[i] = (state.balances[i] + col[pos[i]] - wa) & ring.MASK

    status = Status.OK
    if state.settling:
        status = Status.SETTLE_IN_PROGRESS
    elif any(ev.startswith("rollback:") for ev in state.pending_events):
        status = Status.INTEGRITY_ROLLBACK
    elif state.pending_events:
        status = Status.MEMBERSHIP_CHANGED
    elif offline:
        status = Status.OFFLINE_ROSTER_ATTACHED

    record = RoundRecord(
        round_no=m,
        value=value,
        status=status,
        roster=roster,
        offline=offline,
        vec_sum=tuple(col),
        v_prime=v_prime,
        c=c,
        member_sums=member_sums,
        events=tuple(state.pending_events),
        cells=cells,
        announce_sum=(
            sum(announcements.values()) & ring.MASK if announcements is not None else None
        ),
    )
    state.pending_events.clear()
    state.log.append(record)
    state.next_round = m + 1
    for i in roster:
        if state.members[i].leave_round == m + 1:
            state.balances.pop(i, None)
    _prune_cells(state)
    return record


def digest_for(state: ServerGroupState, m: int, member: int) -> RoundDigestRecord:
    rec = state.record(m)
    if member not in rec.roster:
        raise ServerError(f"member {member} not active in round {m}")
    if m != state.next_round - 1:
        raise ServerError("per-member balance entries are only served for the last round")
    return RoundDigestRecord(
        round_no=m,
        v_prime=rec.v_prime,
        c=rec.c,
        b_entry=state.balances[member],
        status=rec.status,
    )


def rollback_round(state: ServerGroupState, m: int) -> None:
    """Remove a round's entire contribution after an integrity report.

    b <- b - v + w*a for every entry touched; the round number stays burned
    (masks are deterministic per round, so the number is never reused).
    """
    rec = state.record(m)
    if rec.rolled_back:
        raise ServerError(f"round {m} already rolled back")
    if m != state.next_round - 1:
        raise ServerError("only the latest round can be rolled back")
    wa = (rec.value * state.a) & ring.MASK
    pos = {idx: k for k, idx in enumerate(rec.roster)}
    for i in rec.roster:
        if i in state.balances:
            state.balances[i] = (state.balances[i] - rec.vec_sum[pos[i]] + wa) & ring.MASK
    rec.rolled_back = True
    rec.cells = None
    state.pending_events.append(f"rollback:{m}")


def emit_misbehavior_sums(state: ServerGroupState, m: int) -> dict[int, int]:
    """Per-submitter raw vector sums for round m (cheater identification)."""
    return dict(state.record(m).member_sums)


def reveal_entry(state: ServerGroupState, m: int, accused: int, target: int) -> int:
    """Raw submitted cell x_{accused,target} of round m, for framing disputes."""
    rec = state.record(m)
    if rec.cells is None:
        raise ServerError(f"round {m} cells no longer retained")
    if accused not in rec.cells:
        raise ServerError(f"no submission from {accused} in round {m}")
    if target not in rec.roster:
        raise ServerError(f"member {target} not active in round {m}")
    return rec.cells[accused][rec.roster.index(target)]


def settle_broadcast(state: ServerGroupState) -> dict[int, int]:
    """Snapshot of the masked balance vector; flips the group into settling."""
    state.settling = True
    return {i: state.balances[i] for i in state.roster()}


def add_member(state: ServerGroupState) -> int:
    """Assign the next free index; the newcomer participates from the next round."""
    if state.next_index > N_MAX:
        raise ServerError(f"member slots exhausted (cap {N_MAX})")
    idx = state.next_index
    state.next_index += 1
    # The join event rides the next processed round, so the newcomer is first
    # expected to submit one round after that.
    state.members[idx] = MemberRecord(index=idx, join_round=state.next_round + 1)
    state.balances[idx] = 0
    state.pending_events.append(f"join:{idx}")
    return idx


def remove_member(state: ServerGroupState, index: int, *, attested_zero: bool) -> None:
    """Drop a member from the next round on; requires a zero-balance attestation."""
    if index not in state.members or state.members[index].leave_round is not None:
        raise ServerError(f"member {index} not active")
    if not attested_zero:
        raise ServerError("leave requires a zero-balance attestation")
    # Still expected in the round that carries the event; dropped after it.
    state.members[index].leave_round = state.next_round + 1
    state.pending_events.append(f"leave:{index}")


def replay_balances(
    log: Iterable[RoundRecord], a: int, initial_roster: Sequence[int]
) -> dict[int, int]:
    """Recompute the balance vector from the log alone (crash recovery)."""
    balances = {i: 0 for i in initial_roster}
    for rec in log:
        for ev in rec.events:
            kind, _, arg = ev.partition(":")
            if kind == "join":
                balances[int(arg)] = 0
        if not rec.rolled_back:
            wa = (rec.value * a) & ring.MASK
            for k, i in enumerate(rec.roster):
                balances[i] = (balances[i] + rec.vec_sum[k] - wa) & ring.MASK
        # A leave event rides the member's final round, so their entry is
        # dropped only after that round's deltas are applied.
        for ev in rec.events:
            kind, _, arg = ev.partition(":")
            if kind == "leave":
                balances.pop(int(arg), None)
    return balances


def _prune_cells(state: ServerGroupState) -> None:
    horizon = state.next_round - CELL_RETENTION_ROUNDS
    for rec in state.log:
        if rec.round_no < horizon and rec.cells is not None:
            rec.cells = None
