"""Cheating clients and a tampering server, for the integrity sweeps.

Client-side attacks are vector mutators applied to an honest member's
submission before it reaches the server; server-side attacks are digest
mutators that corrupt what one or more members receive. Detection means at
least one honest member reports an integrity failure or a framing for the
round in question. Framed counts: the framed member has proof the round is
wrong and triggers the same report path.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

from .. import client as cl
from .. import ring
from ..config import Mode
from ..schedule import ScheduleKind, powers_schedule, unit_schedule
from .harness import InProcessGroup

DETECTING = (cl.OutcomeKind.INTEGRITY_FAILURE, cl.OutcomeKind.FRAMED)


# ---------------------------------------------------------------------------
# client-side cheats (vector mutators)


def cheat_double_unit(group: InProcessGroup, target: int):
    """Charge two units at once: the vector sum comes out one unit too high."""
    unit = group.clients[target].unit()

    def mutate(i: int, vec: list[int]) -> list[int]:
        st = group.clients[i]
        pos = st.roster().index(target)
        out = list(vec)
        out[pos] = ring.add(out[pos], unit)
        return out

    return mutate


def cheat_redirect(group: InProcessGroup, victim: int, beneficiary: int):
    """Sum-preserving theft: +unit at the victim, -unit at the beneficiary.

    The integrity poll passes by construction; detection has to come from the
    per-member balance checks of the victim and the beneficiary.
    """

    def mutate(i: int, vec: list[int]) -> list[int]:
        st = group.clients[i]
        roster = st.roster()
        unit = st.unit()
        out = list(vec)
        out[roster.index(victim)] = ring.add(out[roster.index(victim)], unit)
        out[roster.index(beneficiary)] = ring.sub(out[roster.index(beneficiary)], unit)
        return out

    return mutate


def cheat_garbage(rng: random.Random):
    """Replace the whole submission with random ring words."""

    def mutate(i: int, vec: list[int]) -> list[int]:
        return [rng.randrange(ring.MOD) for _ in vec]

    return mutate


def cheat_untagged_unit(group: InProcessGroup, target: int):
    """Malicious mode: charge with a bare 1 instead of the tagged unit s."""

    def mutate(i: int, vec: list[int]) -> list[int]:
        st = group.clients[i]
        roster = st.roster()
        out = list(vec)
        out[roster.index(target)] = ring.add(out[roster.index(target)], 1)
        # keep the vector sum right so only the tag is wrong
        out[roster.index(i)] = ring.sub(out[roster.index(i)], 1)
        return out

    return mutate


# ---------------------------------------------------------------------------
# server-side corruptions (digest mutators)


def corrupt_field(field: str, value: int, members: set[int] | None = None):
    """Substitute one digest field for the chosen members (None = everyone)."""

    def mutate(i: int, digest: cl.RoundDigest) -> cl.RoundDigest:
        if members is not None and i not in members:
            return digest
        return replace(digest, **{field: value})

    return mutate


def swap_balances(group: InProcessGroup, i: int, j: int):
    """Serve member i the balance entry of member j and vice versa."""

    def mutate(member: int, digest: cl.RoundDigest) -> cl.RoundDigest:
        if member == i:
            return replace(digest, b_entry=group.server.balances[j])
        if member == j:
            return replace(digest, b_entry=group.server.balances[i])
        return digest

    return mutate


def replay_previous(group: InProcessGroup, members: set[int] | None = None):
    """Serve last round's aggregate values under the current round number."""
    prev = group.server.log[-1]

    def mutate(i: int, digest: cl.RoundDigest) -> cl.RoundDigest:
        if members is not None and i not in members:
            return digest
        return replace(digest, v_prime=prev.v_prime, c=prev.c)

    return mutate


def frame_member(group: InProcessGroup, framed: int):
    """Rewrite c so the trace decodes the idle member `framed` as the charger."""

    def mutate(i: int, digest: cl.RoundDigest) -> cl.RoundDigest:
        st = group.clients[i]
        m = digest.round_no
        sheet = cl._sheet(st, m, st.roster(), digest.offline)
        w = st.schedule.round_value(m)
        base = cl._c_base(st, m, w, sheet, "normal")
        weight = cl._charge_weight(st, m, w, "normal")
        forged = ring.sub(base, (weight << framed) & ring.MASK)
        return replace(digest, c=forged)

    return mutate


# ---------------------------------------------------------------------------
# sweep drivers


@dataclass(frozen=True)
class Trial:
    seed: int
    kind: str
    mode: Mode
    detected: bool
    outcomes: dict[int, str]


CLIENT_CHEATS = ("double", "redirect", "garbage", "untagged")
SERVER_CORRUPTIONS = ("v_prime", "c", "b_entry", "swap", "replay")


def _fresh_group(rng: random.Random, mode: Mode) -> InProcessGroup:
    n = rng.randint(3, 8)
    sched = unit_schedule() if rng.random() < 0.7 else powers_schedule()
    g = InProcessGroup(n, mode, sched)
    for _ in range(rng.randint(1, 4)):
        intents = {}
        if rng.random() < 0.7:
            charger = rng.randint(1, n)
            target = rng.choice([i for i in range(1, n + 1) if i != charger])
            intents[charger] = cl.RoundIntent.charge(target)
        g.run_round(intents)
    return g


def run_cheat_trial(seed: int) -> Trial:
    rng = random.Random(seed)
    kind = CLIENT_CHEATS[seed % len(CLIENT_CHEATS)]
    mode = Mode.MALICIOUS if kind == "untagged" or rng.random() < 0.5 else Mode.SEMIHONEST
    g = _fresh_group(rng, mode)
    n = len(g.server.roster())
    cheater = rng.randint(1, n)
    others = [i for i in range(1, n + 1) if i != cheater]
    rng.shuffle(others)

    if kind == "double":
        mut = cheat_double_unit(g, others[0])
        intent = cl.RoundIntent.charge(others[0])
    elif kind == "redirect":
        mut = cheat_redirect(g, others[0], others[1])
        intent = cl.RoundIntent.idle()
    elif kind == "garbage":
        mut = cheat_garbage(rng)
        intent = cl.RoundIntent.idle()
    else:
        mut = cheat_untagged_unit(g, others[0])
        intent = cl.RoundIntent.idle()

    report = g.run_round(
        {cheater: intent}, vector_mutators={cheater: mut}, auto_report=False
    )
    detected = any(
        o.kind in DETECTING for i, o in report.outcomes.items() if i != cheater
    )
    return Trial(
        seed,
        kind,
        mode,
        detected,
        {i: o.kind.name for i, o in report.outcomes.items()},
    )


def run_corruption_trial(seed: int, mode: Mode | None = None) -> Trial:
    rng = random.Random(10_000_019 + seed)
    kind = SERVER_CORRUPTIONS[seed % len(SERVER_CORRUPTIONS)]
    if mode is None:
        mode = Mode.MALICIOUS if rng.random() < 0.5 else Mode.SEMIHONEST
    else:
        rng.random()  # keep the seed -> group derivation stable either way
    g = _fresh_group(rng, mode)
    n = len(g.server.roster())

    intents = {}
    if rng.random() < 0.6:
        charger = rng.randint(1, n)
        target = rng.choice([i for i in range(1, n + 1) if i != charger])
        intents[charger] = cl.RoundIntent.charge(target)

    hit = set(rng.sample(range(1, n + 1), rng.randint(1, n)))
    if kind in ("v_prime", "c", "b_entry"):
        mut = corrupt_field(kind, rng.randrange(ring.MOD), hit)
    elif kind == "swap":
        i, j = rng.sample(range(1, n + 1), 2)
        # make the two entries actually differ: swap right after a charge
        intents = {i: cl.RoundIntent.charge(j)}
        mut = swap_balances(g, i, j)
    else:
        mut = replay_previous(g, hit)

    report = g.run_round(intents, digest_mutator=mut, auto_report=False)
    outcomes = {i: o.kind.name for i, o in report.outcomes.items()}
    detected = any(o.kind in DETECTING for o in report.outcomes.values())
    # In malicious mode a corrupted trace aggregate is indistinguishable from
    # a collision at first; the resend round then fails to expose a plausible
    # charger set. Run the resolution out and count late detection.
    follow = 0
    while not detected and g.busy() and follow < 4:
        report = g.run_round(auto_report=False)
        detected = any(o.kind in DETECTING for o in report.outcomes.values())
        follow += 1
    return Trial(seed, kind, mode, detected, outcomes)


def sweep(trial, count: int, seed0: int = 0) -> list[Trial]:
    return [trial(seed0 + k) for k in range(count)]
