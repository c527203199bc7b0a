"""Member-side protocol state machine.

Each member submits one masked vector per round and checks three aggregates
coming back.  All expectations follow from what the server computes: it
scales every submission by the public round value w, adds them entrywise
into the balance vector, subtracts w*a per entry, and publishes

    v'  = sum of all scaled entries,
    c   = sum_i (w*x_{i,i} - w*a) * 2^i,
    b_l = the member's own balance entry.

With the round's mask sheet (recomputable from the group key) every honest
member can predict v' exactly, match c against one candidate per possible
charger, and match its own balance delta against the handful of values its
net position x in {-1, 0, +1} allows.  In malicious mode real units are
tagged s*1 + r, so a forged aggregate has to hit a secret multiple of s;
in semihonest mode the unit is a bare 1.

Collisions (two chargers in one round) break the single-charger pattern of c
and are repaired in-band: semihonest groups roll the round back in one extra
round, malicious groups first repeat the round untagged (which exposes the
collider set bit-by-bit) and then roll back, after which the colliding
chargers re-send one per round in index order.  The rollback entry each
member contributes is derived from the requirement that the three resolution
rounds together leave every balance exactly where it started:

    semihonest:  t = 1 + (-w0*x)/w1
    malicious:   t = s + (w1*(s-1) - x*(w0*s + w1))/w2

where x is the member's own net delta in the collided round and the division
is exact shifting in the ring (unit and equal-value schedules divide
trivially; anything else raises DivisibilityError).

Offline members are substituted by the server with the synthetic vector
a*e_i, which freezes their balance and drops out of the trace aggregate;
everyone else just moves them from the submitter set to the passive column
set when predicting.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

from . import masks, packing, ring
from .config import Mode
from .masks import GroupSecret, MaskDomain, RoundMaskSheet
from .schedule import Schedule, ScheduleKind
from .server import Status

DIGEST_RETENTION = 64


class ProtocolError(Exception):
    pass


class DivisibilityError(ProtocolError):
    """A resolution round value cannot divide the required correction."""


class OutcomeKind(Enum):
    IDLE = "idle"
    CHARGED = "charged"
    COLLISION = "collision"
    RESOLUTION = "resolution"
    FRAMED = "framed"
    INTEGRITY_FAILURE = "integrity-failure"


class Phase(Enum):
    NORMAL = "normal"
    RESEND = "resend"
    ROLLBACK = "rollback"
    RECHARGE = "recharge"


@dataclass(frozen=True)
class ChargeEvent:
    charger: int
    cents: int
    to_self: bool
    lane: int | None = None


@dataclass(frozen=True)
class RoundOutcome:
    kind: OutcomeKind
    round_no: int
    value: int
    charges: tuple[ChargeEvent, ...] = ()
    self_delta_cents: int = 0
    announced_total: int | None = None
    note: str = ""


@dataclass(frozen=True)
class RoundIntent:
    """What a member wants to do in one round.

    Unpacked rounds take at most one target; packed rounds take a lane ->
    target map (distinct lanes, up to six parallel charge bits).
    """

    target: int | None = None
    lane_targets: dict[int, int] = field(default_factory=dict)
    announce_total: int | None = None

    @classmethod
    def idle(cls) -> "RoundIntent":
        return cls()

    @classmethod
    def charge(cls, target: int) -> "RoundIntent":
        return cls(target=target)

    @classmethod
    def charge_lanes(cls, lane_targets: dict[int, int]) -> "RoundIntent":
        return cls(lane_targets=dict(lane_targets))

    @property
    def is_charge(self) -> bool:
        return self.target is not None or bool(self.lane_targets)


@dataclass(frozen=True)
class RoundDigest:
    """Client view of one round's broadcast: the 52-byte core plus extras."""

    round_no: int
    v_prime: int
    c: int
    b_entry: int
    status: Status
    offline: tuple[int, ...] = ()
    events: tuple[str, ...] = ()
    announce_sum: int | None = None
    rolled_back: bool = False


@dataclass
class RoundMeta:
    value: int
    roster: tuple[int, ...]
    offline: tuple[int, ...]
    kind: str  # normal | resend | rollback | burned
    b_before: int = 0
    self_delta_cents: int = 0


@dataclass
class MemberView:
    index: int
    join_round: int
    leave_round: int | None = None

    def active_at(self, m: int) -> bool:
        return self.join_round <= m and (self.leave_round is None or m < self.leave_round)


@dataclass
class CollisionState:
    round0: int
    value0: int
    x_self: int = 0
    x_lanes: tuple[int, ...] | None = None
    own_intent: RoundIntent | None = None
    chargers: tuple[int, ...] = ()
    value1: int | None = None
    recharge_queue: list[int] = field(default_factory=list)


@dataclass
class ClientGroupState:
    secret: GroupSecret
    index: int
    mode: Mode
    schedule: Schedule
    members: dict[int, MemberView]
    next_round: int = 0
    b_reported: int = 0
    balance_cents: int = 0
    drift: dict[int, int] = field(default_factory=dict)
    digests: deque = field(default_factory=lambda: deque(maxlen=DIGEST_RETENTION))
    round_meta: dict[int, RoundMeta] = field(default_factory=dict)
    phase: Phase = Phase.NORMAL
    collision: CollisionState | None = None
    sent_intents: dict[int, RoundIntent] = field(default_factory=dict)
    settling: bool = False
    # events of the most recently seen digest, kept so that a round this
    # client rejected can still apply its membership changes when burned
    last_seen_events: tuple[int, tuple[str, ...]] | None = None

    def roster(self, m: int | None = None) -> tuple[int, ...]:
        at = self.next_round if m is None else m
        return tuple(sorted(i for i, v in self.members.items() if v.active_at(at)))

    @property
    def in_resolution(self) -> bool:
        return self.phase is not Phase.NORMAL

    def unit(self) -> int:
        return self.secret.s if self.mode is Mode.MALICIOUS else 1

    def a_const(self) -> int:
        return setup_constant(self.secret, self.mode)


def setup_constant(secret: GroupSecret, mode: Mode) -> int:
    """The value the group registers with the server at setup.

    Semihonest groups hand over a bare 1; malicious groups hand over
    s*1 + u so the server's own per-round subtraction stays tag-consistent.
    """
    if mode is Mode.MALICIOUS:
        return masks.tag_value(1, secret.s, secret.u)
    return 1


def verify_setup_constant(secret: GroupSecret, mode: Mode, a: int) -> bool:
    return a == setup_constant(secret, mode)


def setup_client(
    secret: GroupSecret, index: int, n: int, mode: Mode, sched: Schedule
) -> ClientGroupState:
    members = {i: MemberView(i, 0) for i in range(1, n + 1)}
    if index not in members:
        raise ProtocolError(f"index {index} outside initial roster 1..{n}")
    return ClientGroupState(
        secret=secret,
        index=index,
        mode=mode,
        schedule=sched,
        members=members,
        drift={i: 0 for i in members},
    )


def join_client(
    secret: GroupSecret,
    index: int,
    mode: Mode,
    sched: Schedule,
    sponsor: ClientGroupState,
) -> ClientGroupState:
    """State for a member admitted mid-life, bootstrapped from the inviter.

    The inviter already hands the newcomer the group key; the same bundle
    carries its mask-drift snapshot and member table. Without the pre-join
    drift history the newcomer could not strip mask noise from the balance
    vector at settle time, and the server cannot serve that history because
    it never learns which rounds were resolution rounds.
    """
    if sponsor.in_resolution or sponsor.settling:
        raise ProtocolError("cannot bootstrap a newcomer during a resolution or settle")
    if index not in sponsor.members:
        raise ProtocolError(f"join of {index} not announced to the sponsor yet")
    members = {
        i: MemberView(v.index, v.join_round, v.leave_round)
        for i, v in sponsor.members.items()
    }
    state = ClientGroupState(
        secret=secret,
        index=index,
        mode=mode,
        schedule=sched,
        members=members,
        drift=dict(sponsor.drift),
        next_round=sponsor.next_round,
    )
    # The snapshot's newest round is the one round a late integrity report can
    # still roll back; its meta rides along so the inherited drift stays
    # revertible.  The newcomer had no balance or deltas in it.
    last = sponsor.round_meta.get(sponsor.next_round - 1)
    if last is not None and last.kind == "normal":
        state.round_meta[sponsor.next_round - 1] = RoundMeta(
            last.value, last.roster, last.offline, "normal"
        )
    return state


# ---------------------------------------------------------------------------
# building submissions


def _check_packed_intent(state: ClientGroupState, intent: RoundIntent) -> None:
    roster = state.roster()
    for lane, target in intent.lane_targets.items():
        if not 0 <= lane < packing.SLOTS:
            raise ProtocolError(f"lane {lane} out of range")
        if target == state.index or target not in roster:
            raise ProtocolError(f"bad packed target {target}")


def build_round_vector(state: ClientGroupState, intent: RoundIntent) -> list[int]:
    """The masked submission for the next round under a user intent.

    Refused while a collision is being resolved; during the recharge window
    only the scheduled recharger may move, everyone else covers idle.
    """
    if state.phase in (Phase.RESEND, Phase.ROLLBACK):
        raise ProtocolError("collision resolution pending; use collision_resolution_next")
    if state.phase is Phase.RECHARGE:
        if intent.is_charge:
            raise ProtocolError("charges are queued until the recharge window drains")
        intent = _recharge_intent(state) or intent
    m = state.next_round
    if state.schedule.kind is ScheduleKind.PACKED:
        _check_packed_intent(state, intent)
        vec = _packed_vector(state, m, intent)
    else:
        vec = _unpacked_vector(state, m, intent)
    state.sent_intents[m] = intent
    _prune_intents(state)
    return vec


def _unpacked_vector(state: ClientGroupState, m: int, intent: RoundIntent) -> list[int]:
    roster = state.roster(m)
    if intent.target is not None and (
        intent.target == state.index or intent.target not in roster
    ):
        raise ProtocolError(f"bad charge target {intent.target}")
    row = state.secret.round_mask_row(m, state.index, roster)
    unit = state.unit()
    vec = []
    for j in roster:
        x = row[j]
        if intent.target is None and j == state.index:
            x = ring.add(x, unit)
        elif j == intent.target:
            x = ring.add(x, unit)
        vec.append(x)
    return vec


def _packed_vector(state: ClientGroupState, m: int, intent: RoundIntent) -> list[int]:
    roster = state.roster(m)
    row = state.secret.round_mask_row(m, state.index, roster)
    lane_vals = state.schedule.lane_values(m)
    add_per_member: dict[int, int] = {}
    for lane in range(packing.SLOTS):
        target = intent.lane_targets.get(lane, state.index)
        word = lane_vals[lane] << (packing.SLOT_BITS * lane)
        add_per_member[target] = add_per_member.get(target, 0) + word
    vec = []
    for j in roster:
        x = ring.add(row[j], add_per_member.get(j, 0))
        vec.append(x)
    return vec


def _recharge_intent(state: ClientGroupState) -> RoundIntent | None:
    col = state.collision
    if col is None or not col.recharge_queue:
        return None
    if col.recharge_queue[0] != state.index:
        return None
    if state.schedule.kind is ScheduleKind.PACKED:
        if state.schedule.window(state.next_round) != state.schedule.window(col.round0):
            return None
    return col.own_intent


def collision_resolution_next(state: ClientGroupState) -> list[int]:
    """The prescribed submission for the current resolution round."""
    col = state.collision
    m = state.next_round
    if state.phase is Phase.RESEND:
        intent = col.own_intent or RoundIntent.idle()
        roster = state.roster(m)
        if intent.target is not None and intent.target not in roster:
            raise ProtocolError("resend target left the group mid-resolution")
        row = state.secret.round_mask_row(m, state.index, roster)
        vec = []
        for j in roster:
            x = row[j]
            if (intent.target is None and j == state.index) or j == intent.target:
                x = ring.add(x, 1)  # untagged unit exposes the collider set
            vec.append(x)
        return vec
    if state.phase is Phase.ROLLBACK:
        roster = state.roster(m)
        row = state.secret.round_mask_row(m, state.index, roster)
        tau = _rollback_entry(state, m)
        return [
            ring.add(row[j], tau) if j == state.index else row[j] for j in roster
        ]
    raise ProtocolError("no resolution round pending")


def _exact_ring_div(y: int, w: int) -> int:
    """Canonical q with w*q = y in the ring; w must divide y's low bits."""
    if w == 1:
        return y & ring.MASK
    if w & (w - 1):
        q, rem = divmod(y & ring.MASK, w)
        if rem:
            raise DivisibilityError(f"value {w} cannot divide correction")
        return q
    shift = w.bit_length() - 1
    if y & (w - 1):
        raise DivisibilityError(f"value {w} cannot divide correction")
    return (y & ring.MASK) >> shift


def _rollback_entry(state: ClientGroupState, m: int) -> int:
    col = state.collision
    s = state.secret.s
    if state.schedule.kind is ScheduleKind.PACKED:
        v0 = state.schedule.lane_values(col.round0)
        word = state.schedule.packed_unit(m)
        for k, xk in enumerate(col.x_lanes):
            word = ring.sub(word, (v0[k] * xk) << (packing.SLOT_BITS * k))
        return word
    w_now = state.schedule.round_value(m)
    if state.mode is Mode.SEMIHONEST:
        corr = _exact_ring_div(ring.neg(col.value0 * col.x_self), w_now)
        return ring.add(1, corr)
    w1 = col.value1
    y = ring.sub(
        ring.mul(w1, ring.sub(s, 1)),
        ring.mul(col.x_self & ring.MASK, ring.add(ring.mul(col.value0, s), w1)),
    )
    return ring.add(s, _exact_ring_div(y, w_now))


def _prune_intents(state: ClientGroupState) -> None:
    horizon = state.next_round - 8
    for k in [k for k in state.sent_intents if k < horizon]:
        del state.sent_intents[k]


# ---------------------------------------------------------------------------
# digest verification


def _cover_base(state: ClientGroupState, m: int, kind: str) -> int:
    """True own-cell content of an idle submitter, before masking."""
    if state.schedule.kind is ScheduleKind.PACKED:
        return state.schedule.packed_unit(m)
    if kind == "resend":
        return 1
    return state.unit()


def _sheet(state: ClientGroupState, m: int, roster, offline) -> RoundMaskSheet:
    online = [i for i in roster if i not in offline]
    return state.secret.round_mask_sheet(m, online, roster)


def _poll_expected(
    state: ClientGroupState,
    m: int,
    w: int,
    sheet: RoundMaskSheet,
    n_online: int,
    n_offline: int,
    kind: str,
) -> int:
    """Exact v' an honest server must publish for round m.

    Every online submitter contributes exactly one cover's worth of true
    value plus its mask row; offline members contribute the synthetic a.  In
    the malicious rollback round the per-member corrections carry an extra
    w1*(s-1) term each, while the x-dependent parts cancel across the group
    (net deltas of a collided round sum to zero).
    """
    base = _cover_base(state, m, kind)
    acc = w * n_online * base + w * n_offline * state.a_const() + w * sheet.total
    if (
        kind == "rollback"
        and state.mode is Mode.MALICIOUS
        and state.schedule.kind is not ScheduleKind.PACKED
    ):
        acc += n_online * state.collision.value1 * (state.secret.s - 1)
    return acc & ring.MASK


def _c_base(
    state: ClientGroupState, m: int, w: int, sheet: RoundMaskSheet, kind: str
) -> int:
    """Trace aggregate if every online member had covered idle."""
    base_cover = _cover_base(state, m, kind)
    a = state.a_const()
    acc = 0
    for i in sheet.submitters:
        acc += (w * ((sheet.diag(i) + base_cover - a) & ring.MASK)) << i
    return acc & ring.MASK


def _charge_weight(state: ClientGroupState, m: int, w: int, kind: str) -> int:
    """What one charger's missing cover subtracts from the c aggregate, per index."""
    if kind == "resend":
        return w
    return (w * state.unit()) & ring.MASK


def _shift(state: ClientGroupState, m: int, w: int, kind: str) -> int:
    """Per-online-member public drift a round adds to a balance entry.

    This is w*(cover - a): zero for plain semihonest rounds, -w*u per round
    in malicious mode (the masked one keeps real units unforgeable), the
    lane-cover offset for packed rounds, and the derived correction constant
    in resolution rounds.
    """
    base = _cover_base(state, m, kind)
    sh = (w * (base - state.a_const())) & ring.MASK
    if (
        kind == "rollback"
        and state.mode is Mode.MALICIOUS
        and state.schedule.kind is not ScheduleKind.PACKED
    ):
        sh = ring.add(sh, (state.collision.value1 * (state.secret.s - 1)) & ring.MASK)
    return sh


def _accrue(
    state: ClientGroupState,
    digest: RoundDigest,
    w: int,
    roster: tuple[int, ...],
    offline: tuple[int, ...],
    sheet: RoundMaskSheet,
    kind: str,
    self_delta_cents: int = 0,
) -> None:
    """Advance drift accounting and the round counter after a verified round."""
    m = digest.round_no
    sh = _shift(state, m, w, kind)
    off = set(offline)
    for k in roster:
        d = (state.drift.get(k, 0) + w * sheet.col_sums[k]) & ring.MASK
        if k not in off:
            d = ring.add(d, sh)
        state.drift[k] = d
    meta = RoundMeta(
        w, roster, offline, kind,
        b_before=state.b_reported,
        self_delta_cents=self_delta_cents,
    )
    state.b_reported = digest.b_entry
    state.balance_cents += self_delta_cents
    state.round_meta[m] = meta
    state.digests.append(digest)
    state.next_round = m + 1
    state.settling = digest.status is Status.SETTLE_IN_PROGRESS
    _apply_events(state, digest.events, m)


def revert_round(state: ClientGroupState, m: int) -> None:
    """Undo the accounting of the last accepted round after a server rollback.

    Needed when a peer reported tampering this member could not see (their
    own balance field was the corrupted one) and the server removed a round
    this member had already accepted.
    """
    meta = state.round_meta.get(m)
    if meta is None or m != state.next_round - 1:
        raise ProtocolError(f"round {m} is not the last accepted round")
    if meta.kind != "normal" or state.phase is not Phase.NORMAL:
        raise ProtocolError("cannot revert a resolution round")
    sheet = _sheet(state, m, meta.roster, meta.offline)
    sh = _shift(state, m, meta.value, "normal")
    off = set(meta.offline)
    for k in meta.roster:
        d = ring.sub(state.drift.get(k, 0), (meta.value * sheet.col_sums[k]) & ring.MASK)
        if k not in off:
            d = ring.sub(d, sh)
        state.drift[k] = d
    state.b_reported = meta.b_before
    state.balance_cents -= meta.self_delta_cents
    state.round_meta[m] = RoundMeta(0, meta.roster, (), "burned")


def _apply_events(state: ClientGroupState, events: tuple[str, ...], m: int) -> None:
    for ev in events:
        kind, _, arg = ev.partition(":")
        if kind == "join":
            idx = int(arg)
            if idx not in state.members:
                state.members[idx] = MemberView(idx, m + 1)
                state.drift[idx] = 0
        elif kind == "leave":
            idx = int(arg)
            if idx in state.members and state.members[idx].leave_round is None:
                state.members[idx].leave_round = m + 1


def _burn_round(state: ClientGroupState, m: int, events: tuple[str, ...] = ()) -> None:
    """A rolled-back round contributes nothing to balances, but membership
    events it carried still happened on the server and must be mirrored."""
    state.round_meta[m] = RoundMeta(0, state.roster(m), (), "burned")
    _apply_events(state, events, m)
    state.next_round = m + 1


def _fail(digest: RoundDigest, w: int, note: str) -> RoundOutcome:
    return RoundOutcome(
        kind=OutcomeKind.INTEGRITY_FAILURE,
        round_no=digest.round_no,
        value=w,
        note=note,
    )


def _read_announcement(
    state: ClientGroupState, m: int, digest: RoundDigest, online: Sequence[int]
) -> int | None:
    if digest.announce_sum is None:
        return None
    acc = digest.announce_sum
    for i in online:
        acc = ring.sub(acc, state.secret.announce_mask(m, i))
    total = ring.signed(acc)
    return total or None


def process_round_digest(state: ClientGroupState, digest: RoundDigest) -> RoundOutcome:
    """Verify one round broadcast, advance local state, and say what happened.

    On any integrity mismatch the state does not advance and the caller is
    expected to report the error; the server's rollback confirmation arrives
    as a ``rollback:m`` event on the next round, at which point the burned
    round is skipped.
    """
    m = digest.round_no
    if m != state.next_round:
        if m == state.next_round + 1 and f"rollback:{state.next_round}" in digest.events:
            seen = state.last_seen_events
            burned_events = seen[1] if seen and seen[0] == state.next_round else ()
            _burn_round(state, state.next_round, burned_events)
        else:
            raise ProtocolError(
                f"digest for round {m} but client is at {state.next_round}; catch up first"
            )
    elif f"rollback:{m - 1}" in digest.events:
        prior = state.round_meta.get(m - 1)
        if prior is not None and prior.kind != "burned":
            # a peer saw tampering we could not; drop the round we accepted
            revert_round(state, m - 1)
    state.last_seen_events = (m, digest.events)
    w = state.schedule.round_value(m)
    if digest.rolled_back:
        _burn_round(state, m, digest.events)
        return RoundOutcome(
            kind=OutcomeKind.INTEGRITY_FAILURE,
            round_no=m,
            value=w,
            note="round was rolled back",
        )
    roster = state.roster(m)
    offline = tuple(i for i in digest.offline if i in roster)
    sheet = _sheet(state, m, roster, offline)
    kind = {
        Phase.NORMAL: "normal",
        Phase.RECHARGE: "normal",
        Phase.RESEND: "resend",
        Phase.ROLLBACK: "rollback",
    }[state.phase]

    expected_poll = _poll_expected(
        state, m, w, sheet, len(sheet.submitters), len(offline), kind
    )
    if digest.v_prime != expected_poll:
        return _fail(digest, w, "integrity poll mismatch")

    if state.phase is Phase.RESEND:
        return _process_resend(state, digest, w, roster, offline, sheet)
    if state.phase is Phase.ROLLBACK:
        return _process_rollback(state, digest, w, roster, offline, sheet)
    return _process_normal(state, digest, w, roster, offline, sheet)


# -- normal rounds (and recharge rounds, which are normal rounds with a queue)


def _process_normal(
    state: ClientGroupState,
    digest: RoundDigest,
    w: int,
    roster: tuple[int, ...],
    offline: tuple[int, ...],
    sheet: RoundMaskSheet,
) -> RoundOutcome:
    m = digest.round_no
    self_online = state.index in sheet.submitters
    intent = state.sent_intents.get(m, RoundIntent.idle()) if self_online else RoundIntent.idle()

    if state.schedule.kind is ScheduleKind.PACKED:
        return _process_normal_packed(
            state, digest, w, roster, offline, sheet, intent, self_online
        )

    base = _c_base(state, m, w, sheet, "normal")
    weight = _charge_weight(state, m, w, "normal")
    z = ring.sub(base, digest.c)
    candidates = {0: None}
    for i in sheet.submitters:
        candidates[(weight << i) & ring.MASK] = i

    if z not in candidates:
        return _enter_collision(state, digest, w, roster, offline, sheet, intent, z, base)

    charger = candidates[z]
    if intent.target is not None and charger != state.index:
        return _fail(digest, w, "own charge missing from trace aggregate")

    if charger is None:
        x_candidates = {0: 0}
    elif charger == state.index:
        if intent.target is None:
            # trace points at us but we covered idle: framing
            x_candidates = {0: 0, 1: 1}
        else:
            x_candidates = {-1: -1}
    else:
        x_candidates = {0: 0, 1: 1}

    x = _match_balance(state, digest, w, sheet, self_online, "normal", x_candidates)
    if x is None:
        return _fail(digest, w, "balance entry matches no admissible delta")

    framed = charger == state.index and intent.target is None
    _accrue(state, digest, w, roster, offline, sheet, "normal", self_delta_cents=w * x)
    _advance_recharge(state, charger)
    announced = _read_announcement(state, m, digest, sheet.submitters)

    if framed:
        return RoundOutcome(
            kind=OutcomeKind.FRAMED,
            round_no=m,
            value=w,
            charges=(ChargeEvent(state.index, w, to_self=bool(x)),),
            self_delta_cents=w * x,
            announced_total=announced,
            note="trace names this member but no charge was sent",
        )
    if charger is None:
        return RoundOutcome(
            kind=OutcomeKind.IDLE,
            round_no=m,
            value=w,
            announced_total=announced,
        )
    return RoundOutcome(
        kind=OutcomeKind.CHARGED,
        round_no=m,
        value=w,
        charges=(ChargeEvent(charger, w, to_self=x > 0),),
        self_delta_cents=w * x,
        announced_total=announced,
    )


def _match_balance(
    state: ClientGroupState,
    digest: RoundDigest,
    w: int,
    sheet: RoundMaskSheet,
    self_online: bool,
    kind: str,
    x_candidates: dict[int, int],
) -> int | None:
    """Return the net delta x whose expected balance entry matches, if any."""
    if state.index not in sheet.col_sums:
        return None
    baseline = (state.b_reported + w * sheet.col_sums[state.index]) & ring.MASK
    if self_online:
        baseline = ring.add(baseline, _shift(state, digest.round_no, w, kind))
    unit_w = _charge_weight(state, digest.round_no, w, kind)
    for x in x_candidates.values():
        expected = (baseline + unit_w * x) & ring.MASK
        if digest.b_entry == expected:
            return x
    return None


def _enter_collision(
    state: ClientGroupState,
    digest: RoundDigest,
    w: int,
    roster: tuple[int, ...],
    offline: tuple[int, ...],
    sheet: RoundMaskSheet,
    intent: RoundIntent,
    z: int,
    base: int,
) -> RoundOutcome:
    """c matched no single-charger pattern: collision, or a tampered digest."""
    m = digest.round_no
    self_online = state.index in sheet.submitters
    prior = state.collision
    prior_queue = list(prior.recharge_queue) if prior else []

    if state.mode is Mode.SEMIHONEST:
        try:
            bits = _exact_ring_div(z, w)
        except DivisibilityError:
            return _fail(digest, w, "trace aggregate is not a charger-set pattern")
        chargers = _decode_bits(bits, sheet.submitters)
        if chargers is None or len(chargers) < 2:
            return _fail(digest, w, "trace aggregate is not a charger-set pattern")
        if intent.target is not None and state.index not in chargers:
            return _fail(digest, w, "own charge missing from collided trace aggregate")
        bound = len(chargers)
    else:
        chargers = ()
        bound = len(sheet.submitters)

    x_candidates = {x: x for x in range(-1, bound + 1)}
    x = _match_balance(state, digest, w, sheet, self_online, "normal", x_candidates)
    if x is None:
        return _fail(digest, w, "balance entry matches no admissible delta")

    own = intent if self_online else None
    # a recharge still queued from the previous collision must not evaporate
    if prior and state.index in prior_queue and (own is None or not own.is_charge):
        own = prior.own_intent
    state.collision = CollisionState(
        round0=m,
        value0=w,
        x_self=x,
        own_intent=own,
        chargers=tuple(chargers),
        recharge_queue=list(chargers) if chargers else [],
    )
    if prior_queue:
        state.collision.recharge_queue.extend(
            i for i in prior_queue if i not in state.collision.recharge_queue
        )
    state.phase = Phase.ROLLBACK if state.mode is Mode.SEMIHONEST else Phase.RESEND
    _accrue(state, digest, w, roster, offline, sheet, "normal", self_delta_cents=w * x)
    return RoundOutcome(
        kind=OutcomeKind.COLLISION,
        round_no=m,
        value=w,
        self_delta_cents=w * x,
        note=f"collision; chargers {list(chargers)}" if chargers else "collision",
    )


def _decode_bits(bits: int, online: Sequence[int]) -> tuple[int, ...] | None:
    """Interpret an integer as a subset of online indices, or refuse."""
    if bits <= 0:
        return None
    out = []
    allowed = set(online)
    i = 0
    while bits:
        if bits & 1:
            if i not in allowed:
                return None
            out.append(i)
        bits >>= 1
        i += 1
    return tuple(out)


def _advance_recharge(state: ClientGroupState, charger: int | None) -> None:
    if state.phase is not Phase.RECHARGE:
        return
    col = state.collision
    if charger is not None and col and col.recharge_queue and col.recharge_queue[0] == charger:
        col.recharge_queue.pop(0)
    if col and not col.recharge_queue:
        state.phase = Phase.NORMAL
        state.collision = None


# -- packed rounds


def _decode_packed_charges(
    state: ClientGroupState, m: int, z: int, online: Sequence[int]
) -> list[tuple[int, int]] | None:
    """Bits of z are single charges V_k * 2^(21k + i); return (lane, charger) pairs.

    The top bit is a legitimate exponent at the index limit (window 2, lane 5,
    index 5 lands on bit 127), so no sign guard here; junk aggregates fail the
    per-bit validity check instead.
    """
    if z == 0:
        return []
    t = state.schedule.window(m)
    allowed = set(online)
    out = []
    e = 0
    while z:
        if z & 1:
            hit = None
            for k in range(packing.SLOTS):
                i = e - packing.SLOTS * t - (packing.SLOT_BITS + 1) * k
                if i in allowed:
                    hit = (k, i)
                    break
            if hit is None:
                return None
            out.append(hit)
        z >>= 1
        e += 1
    return out


def _packed_delta_lanes(
    state: ClientGroupState,
    digest: RoundDigest,
    sheet: RoundMaskSheet,
    self_online: bool,
    kind: str,
) -> tuple[int, ...] | None:
    """Own balance delta split into signed lane multiples of the lane values."""
    m = digest.round_no
    if state.index not in sheet.col_sums:
        return None
    baseline = (state.b_reported + sheet.col_sums[state.index]) & ring.MASK
    if self_online:
        baseline = ring.add(baseline, _shift(state, m, 1, kind))
    clean = ring.sub(digest.b_entry, baseline)
    try:
        lanes = packing.unpack_signed(clean)
    except packing.SlotOverflowError:
        return None
    vals = state.schedule.lane_values(m if kind != "rollback" else state.collision.round0)
    out = []
    for k, lane in enumerate(lanes):
        q, rem = divmod(lane, vals[k]) if lane >= 0 else divmod(-lane, vals[k])
        if rem:
            return None
        out.append(q if lane >= 0 else -q)
    return tuple(out)


def _process_normal_packed(
    state: ClientGroupState,
    digest: RoundDigest,
    w: int,
    roster: tuple[int, ...],
    offline: tuple[int, ...],
    sheet: RoundMaskSheet,
    intent: RoundIntent,
    self_online: bool,
) -> RoundOutcome:
    m = digest.round_no
    base = _c_base(state, m, w, sheet, "normal")
    z = ring.sub(base, digest.c)
    entries = _decode_packed_charges(state, m, z, sheet.submitters)
    if entries is None:
        return _fail(digest, w, "trace aggregate is not a packed charge pattern")

    own = [(k, state.index) for k in intent.lane_targets]
    for pair in own:
        if pair not in entries:
            return _fail(digest, w, "own packed charge missing from trace aggregate")

    lane_chargers: dict[int, list[int]] = {}
    for k, i in entries:
        lane_chargers.setdefault(k, []).append(i)
    collided = any(len(v) > 1 for v in lane_chargers.values())

    lanes = _packed_delta_lanes(state, digest, sheet, self_online, "normal")
    if lanes is None:
        return _fail(digest, w, "balance entry matches no packed delta")
    vals = state.schedule.lane_values(m)
    for k, xk in enumerate(lanes):
        mine = -1 if k in intent.lane_targets else 0
        incoming = len(lane_chargers.get(k, ())) - (1 if k in intent.lane_targets else 0)
        if not mine <= xk <= mine + max(incoming, 0):
            return _fail(digest, w, "balance entry matches no packed delta")

    delta_cents = sum(vals[k] * xk for k, xk in enumerate(lanes))

    if collided:
        prior = state.collision
        prior_queue = list(prior.recharge_queue) if prior else []
        chargers = tuple(sorted({i for _, i in entries}))
        own = intent if self_online else None
        if prior and state.index in prior_queue and (own is None or not own.is_charge):
            own = prior.own_intent
        state.collision = CollisionState(
            round0=m,
            value0=w,
            x_self=0,
            x_lanes=lanes,
            own_intent=own,
            chargers=chargers,
            recharge_queue=list(chargers),
        )
        state.collision.recharge_queue.extend(
            i for i in prior_queue if i not in state.collision.recharge_queue
        )
        state.phase = Phase.ROLLBACK
        _accrue(state, digest, w, roster, offline, sheet, "normal", self_delta_cents=delta_cents)
        return RoundOutcome(
            kind=OutcomeKind.COLLISION,
            round_no=m,
            value=w,
            self_delta_cents=delta_cents,
            note=f"packed lane collision; chargers {list(chargers)}",
        )

    _accrue(state, digest, w, roster, offline, sheet, "normal", self_delta_cents=delta_cents)
    framed = any(i == state.index for _, i in entries) and not intent.lane_targets
    charges = tuple(
        ChargeEvent(i, vals[k], to_self=lanes[k] > 0, lane=k) for k, i in sorted(entries)
    )
    chargers_seen = {i for _, i in entries}
    _advance_recharge(state, chargers_seen.pop() if len(chargers_seen) == 1 else None)
    announced = _read_announcement(state, m, digest, sheet.submitters)
    if framed:
        return RoundOutcome(
            kind=OutcomeKind.FRAMED,
            round_no=m,
            value=w,
            charges=charges,
            self_delta_cents=delta_cents,
            announced_total=announced,
            note="trace names this member but no charge was sent",
        )
    if not charges:
        return RoundOutcome(
            kind=OutcomeKind.IDLE, round_no=m, value=w, announced_total=announced
        )
    return RoundOutcome(
        kind=OutcomeKind.CHARGED,
        round_no=m,
        value=w,
        charges=charges,
        self_delta_cents=delta_cents,
        announced_total=announced,
    )


# -- resolution rounds


def _process_resend(
    state: ClientGroupState,
    digest: RoundDigest,
    w: int,
    roster: tuple[int, ...],
    offline: tuple[int, ...],
    sheet: RoundMaskSheet,
) -> RoundOutcome:
    """Untagged repeat of the collided round: exposes the collider set."""
    m = digest.round_no
    col = state.collision
    base = _c_base(state, m, w, sheet, "resend")
    z = ring.sub(base, digest.c)
    try:
        bits = _exact_ring_div(z, w)
    except DivisibilityError:
        return _fail(digest, w, "resend trace aggregate is not a charger-set pattern")
    chargers = _decode_bits(bits, sheet.submitters)
    if chargers is None or len(chargers) < 2:
        return _fail(digest, w, "resend contradicts collision (tampered round)")
    if col.own_intent and col.own_intent.target is not None and state.index not in chargers:
        return _fail(digest, w, "own charge missing from resend aggregate")

    # cross-check the collided round's tagged aggregate against the decoded set
    meta0 = state.round_meta[col.round0]
    sheet0 = _sheet(state, col.round0, meta0.roster, meta0.offline)
    digest0 = _find_digest(state, col.round0)
    if digest0 is not None:
        base0 = _c_base(state, col.round0, col.value0, sheet0, "normal")
        acc = base0
        weight0 = _charge_weight(state, col.round0, col.value0, "normal")
        for i in chargers:
            acc = ring.sub(acc, (weight0 << i) & ring.MASK)
        if acc != digest0.c:
            return _fail(digest, w, "collided round inconsistent with resend set")

    self_online = state.index in sheet.submitters
    x = _match_balance(state, digest, w, sheet, self_online, "resend", {0: col.x_self})
    if x is None:
        return _fail(digest, w, "resend balance contradicts collided round")

    col.chargers = chargers
    col.value1 = w
    col.recharge_queue = list(chargers) + [
        i for i in col.recharge_queue if i not in chargers
    ]
    state.phase = Phase.ROLLBACK
    _accrue(state, digest, w, roster, offline, sheet, "resend", self_delta_cents=w * x)
    return RoundOutcome(
        kind=OutcomeKind.RESOLUTION,
        round_no=m,
        value=w,
        self_delta_cents=w * x,
        note=f"resend; chargers {list(chargers)}",
    )


def _process_rollback(
    state: ClientGroupState,
    digest: RoundDigest,
    w: int,
    roster: tuple[int, ...],
    offline: tuple[int, ...],
    sheet: RoundMaskSheet,
) -> RoundOutcome:
    """Correction round: everyone's own cell restores the pre-collision state."""
    m = digest.round_no
    col = state.collision
    self_online = state.index in sheet.submitters

    if state.index not in sheet.col_sums:
        return _fail(digest, w, "not an active column in rollback round")
    expected = (state.b_reported + w * sheet.col_sums[state.index]) & ring.MASK
    if self_online:
        expected = ring.add(expected, _shift(state, m, w, "rollback"))
        if state.schedule.kind is ScheduleKind.PACKED:
            v0 = state.schedule.lane_values(col.round0)
            for k, xk in enumerate(col.x_lanes):
                expected = ring.sub(expected, (v0[k] * xk) << (packing.SLOT_BITS * k))
        elif state.mode is Mode.SEMIHONEST:
            expected = ring.sub(expected, (col.value0 * col.x_self) & ring.MASK)
        else:
            expected = ring.sub(
                expected,
                (col.x_self * (col.value0 * state.secret.s + col.value1)) & ring.MASK,
            )
    if digest.b_entry != expected:
        return _fail(digest, w, "rollback balance mismatch")

    if state.schedule.kind is ScheduleKind.PACKED:
        undo = -sum(
            state.schedule.lane_values(col.round0)[k] * xk
            for k, xk in enumerate(col.x_lanes)
        )
    elif state.mode is Mode.SEMIHONEST:
        undo = -col.value0 * col.x_self
    else:
        undo = -(col.value0 + col.value1) * col.x_self

    _accrue(state, digest, w, roster, offline, sheet, "rollback", self_delta_cents=undo)
    state.phase = Phase.RECHARGE
    if not col.recharge_queue:
        state.phase = Phase.NORMAL
        state.collision = None
    return RoundOutcome(
        kind=OutcomeKind.RESOLUTION,
        round_no=m,
        value=w,
        self_delta_cents=undo,
        note=f"rollback; recharge order {col.recharge_queue}",
    )


def _find_digest(state: ClientGroupState, m: int) -> RoundDigest | None:
    for d in state.digests:
        if d.round_no == m:
            return d
    return None


# ---------------------------------------------------------------------------
# tracing, settling, audits


def trace(state: ClientGroupState, m: int, digest: RoundDigest | None = None) -> tuple[ChargeEvent, ...]:
    """Who charged in round m; () for idle rounds.

    Works for any retained round; resolution and burned rounds have no
    charger attribution and raise.
    """
    meta = state.round_meta.get(m)
    if meta is None:
        raise ProtocolError(f"round {m} unknown; catch up first")
    if meta.kind != "normal":
        raise ProtocolError(f"round {m} is a {meta.kind} round; nothing to trace")
    digest = digest or _find_digest(state, m)
    if digest is None:
        raise ProtocolError(f"digest for round {m} no longer retained")
    sheet = _sheet(state, m, meta.roster, meta.offline)
    base = _c_base(state, m, meta.value, sheet, "normal")
    z = ring.sub(base, digest.c)
    if state.schedule.kind is ScheduleKind.PACKED:
        entries = _decode_packed_charges(state, m, z, sheet.submitters)
        if entries is None:
            raise ProtocolError("trace aggregate undecodable")
        vals = state.schedule.lane_values(m)
        return tuple(
            ChargeEvent(i, vals[k], to_self=False, lane=k) for k, i in sorted(entries)
        )
    if z == 0:
        return ()
    weight = _charge_weight(state, m, meta.value, "normal")
    for i in sheet.submitters:
        if z == (weight << i) & ring.MASK:
            return (ChargeEvent(i, meta.value, to_self=False),)
    raise ProtocolError("trace aggregate undecodable")


def settle_prepare(state: ClientGroupState, settle_round: int) -> int:
    """Fresh masked claim of the true balance, relayed to peers by the server."""
    if state.in_resolution:
        raise ProtocolError("cannot settle during collision resolution")
    claim = state.balance_cents & ring.MASK
    return ring.add(claim, state.secret.settle_mask(settle_round, state.index))


def settle(
    state: ClientGroupState,
    settle_round: int,
    balances: dict[int, int],
    claims: dict[int, int] | None = None,
) -> dict[int, int]:
    """Recover everyone's true balance in cents from the settle broadcast.

    Semihonest groups strip the accumulated drift from the server's vector
    directly.  Malicious groups additionally require every member's masked
    claim and verify s*claim against the drift-corrected entry, so a lying
    server (or claimant) cannot move the result.
    """
    if state.in_resolution:
        raise ProtocolError("cannot settle during collision resolution")
    roster = state.roster()
    if set(balances) != set(roster):
        raise ProtocolError("settle vector does not match the active roster")
    out: dict[int, int] = {}
    if state.mode is Mode.SEMIHONEST:
        for k in roster:
            word = ring.sub(balances[k], state.drift.get(k, 0))
            if state.schedule.kind is ScheduleKind.PACKED:
                out[k] = sum(packing.unpack_signed(word))
            else:
                out[k] = ring.signed(word)
    else:
        if claims is None or set(claims) != set(roster):
            raise ProtocolError("malicious-mode settle requires every member's claim")
        s = state.secret.s
        for k in roster:
            b_true = ring.signed(
                ring.sub(claims[k], state.secret.settle_mask(settle_round, k))
            )
            expected = ring.add(
                ring.mul(s, b_true & ring.MASK), state.drift.get(k, 0)
            )
            if expected != balances[k]:
                raise ProtocolError(f"settle claim of member {k} fails verification")
            out[k] = b_true
    if sum(out.values()) != 0:
        raise ProtocolError("settled balances do not sum to zero")
    if out.get(state.index) != state.balance_cents:
        raise ProtocolError("own settled balance disagrees with local ledger")
    return out


def verify_misbehavior_sums(
    state: ClientGroupState, m: int, sums: dict[int, int]
) -> list[int]:
    """Names submitters whose vector sum cannot be a well-formed round vector.

    Works both for accepted rounds (from the retained meta) and for the round
    this member just refused to accept, which is the usual reason to ask.
    A sum equal to the setup constant is the server's offline substitution and
    always admissible (submitting it voluntarily is a no-op, not an attack).
    """
    meta = state.round_meta.get(m)
    if meta is not None:
        roster, value, kind = meta.roster, meta.value, meta.kind
    elif m == state.next_round:
        roster = state.roster(m)
        value = state.schedule.round_value(m)
        kind = {
            Phase.NORMAL: "normal",
            Phase.RECHARGE: "normal",
            Phase.RESEND: "resend",
            Phase.ROLLBACK: "rollback",
        }[state.phase]
    else:
        raise ProtocolError(f"round {m} unknown")
    flagged = []
    for i in roster:
        if i not in sums:
            flagged.append(i)
            continue
        if sums[i] == state.a_const():
            continue
        row = state.secret.round_mask_row(m, i, roster)
        clean = ring.sub(sums[i], sum(row.values()) & ring.MASK)
        if not _sum_admissible(state, m, roster, value, kind, clean):
            flagged.append(i)
    return flagged


def _sum_admissible(
    state: ClientGroupState,
    m: int,
    roster: tuple[int, ...],
    value: int,
    kind: str,
    clean: int,
) -> bool:
    if kind == "normal":
        return clean == (_cover_base(state, m, "normal") & ring.MASK)
    if kind == "resend":
        return clean == 1
    if kind == "rollback":
        col0 = _collision_round_before(state, m)
        if col0 is None:
            return False
        if state.schedule.kind is ScheduleKind.PACKED:
            diff = ring.sub(state.schedule.packed_unit(m), clean)
            try:
                lanes = packing.unpack_signed(diff)
            except packing.SlotOverflowError:
                return False
            vals = state.schedule.lane_values(col0)
            return all(lane % vals[k] == 0 for k, lane in enumerate(lanes))
        w0 = state.round_meta[col0].value
        w2 = value
        n = len(roster)
        if state.mode is Mode.SEMIHONEST:
            cands = (ring.add(1, _exact_ring_div(ring.neg(w0 * x), w2)) for x in range(-1, n + 1))
        else:
            w1 = state.round_meta[m - 1].value
            s = state.secret.s
            cands = (
                ring.add(
                    s,
                    _exact_ring_div(
                        ring.sub(
                            ring.mul(w1, ring.sub(s, 1)),
                            (x * (w0 * s + w1)) & ring.MASK,
                        ),
                        w2,
                    ),
                )
                for x in range(-1, n + 1)
            )
        try:
            return any(clean == c for c in cands)
        except DivisibilityError:
            return False
    return True


def _collision_round_before(state: ClientGroupState, m: int) -> int | None:
    k = m - 1
    while k >= 0:
        meta = state.round_meta.get(k)
        if meta is None:
            return None
        if meta.kind == "normal":
            return k
        k -= 1
    return None


def verify_innocence(
    state: ClientGroupState, m: int, accused: int, target: int, revealed: int
) -> str:
    """Judge a revealed cell: 'framed', 'charged', or 'tampered'."""
    r = state.secret.derive_mask(MaskDomain.ROUND, m, accused, target)
    clean = ring.sub(revealed, r)
    if clean == 0:
        return "framed"
    if state.schedule.kind is ScheduleKind.PACKED:
        vals = state.schedule.lane_values(m)
        words = [vals[k] << (packing.SLOT_BITS * k) for k in range(packing.SLOTS)]
        for mask_bits in range(1, 1 << packing.SLOTS):
            acc = 0
            for k in range(packing.SLOTS):
                if mask_bits >> k & 1:
                    acc += words[k]
            if clean == acc & ring.MASK:
                return "charged"
        return "tampered"
    if clean == (state.unit() & ring.MASK):
        return "charged"
    return "tampered"


def prove_innocence_request(state: ClientGroupState, m: int, target: int) -> dict:
    """What a framed member asks the server to reveal."""
    return {"round": m, "accused": state.index, "target": target}


def catch_up(state: ClientGroupState, records: Iterable[RoundDigest]) -> list[RoundOutcome]:
    """Replay missed round broadcasts in order; self rides as offline."""
    outcomes = []
    for digest in records:
        outcomes.append(process_round_digest(state, digest))
        if outcomes[-1].kind is OutcomeKind.INTEGRITY_FAILURE and not digest.rolled_back:
            raise ProtocolError(
                f"catch-up failed at round {digest.round_no}: {outcomes[-1].note}"
            )
    return outcomes


def build_amount_announcement(state: ClientGroupState, total_cents: int | None) -> int:
    """Announcement channel word for the next round: masked total, or cover."""
    word = (total_cents or 0) & ring.MASK
    return ring.add(word, state.secret.announce_mask(state.next_round, state.index))


def read_amount_announcement(
    state: ClientGroupState, m: int, announce_sum: int, online: Sequence[int]
) -> int | None:
    acc = announce_sum
    for i in online:
        acc = ring.sub(acc, state.secret.announce_mask(m, i))
    total = ring.signed(acc)
    return total or None
