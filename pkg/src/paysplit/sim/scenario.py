"""Declarative multi-round scenarios and the runner that checks them.

A scenario is a list of round scripts; the runner feeds them to an in-process
group, applies every scripted transfer to the plaintext ledger oracle, and at
the end requires the protocol's settled balances to equal the oracle exactly.
Scripts scheduled while a collision is still resolving are deferred, so a
scenario stays valid regardless of how many extra rounds resolution took.

JSON form (see ``Scenario.to_json``): one object with n / mode / schedule and
a ``rounds`` list whose entries may carry charges [[charger, target], ...],
lane_charges [[charger, lane, target], ...], offline [i, ...], join (member
count to add) and leave [i, ...].
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .. import client as cl
from ..config import Mode, packed_index_limit
from ..schedule import (
    Schedule,
    ScheduleKind,
    packed_schedule,
    powers_schedule,
    unit_schedule,
)
from .harness import InProcessGroup
from .oracle import LedgerOracle


@dataclass(frozen=True)
class RoundScript:
    charges: tuple[tuple[int, int], ...] = ()
    lane_charges: tuple[tuple[int, int, int], ...] = ()
    offline: tuple[int, ...] = ()
    join: int = 0
    leave: tuple[int, ...] = ()

    @property
    def chargers(self) -> set[int]:
        return {c for c, _ in self.charges} | {c for c, _, _ in self.lane_charges}


@dataclass(frozen=True)
class Scenario:
    name: str
    n: int
    mode: Mode
    schedule: Schedule
    rounds: tuple[RoundScript, ...]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "mode": self.mode.value,
            "schedule": self.schedule.to_json(),
            "rounds": [
                {
                    "charges": [list(c) for c in r.charges],
                    "lane_charges": [list(c) for c in r.lane_charges],
                    "offline": list(r.offline),
                    "join": r.join,
                    "leave": list(r.leave),
                }
                for r in self.rounds
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Scenario":
        return cls(
            name=data.get("name", "scenario"),
            n=int(data["n"]),
            mode=Mode(data.get("mode", "semihonest")),
            schedule=Schedule.from_json(data.get("schedule", {})),
            rounds=tuple(
                RoundScript(
                    charges=tuple((int(a), int(b)) for a, b in r.get("charges", [])),
                    lane_charges=tuple(
                        (int(a), int(k), int(b)) for a, k, b in r.get("lane_charges", [])
                    ),
                    offline=tuple(int(i) for i in r.get("offline", [])),
                    join=int(r.get("join", 0)),
                    leave=tuple(int(i) for i in r.get("leave", [])),
                )
                for r in data.get("rounds", [])
            ),
        )

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class ScenarioReport:
    name: str
    rounds_run: int
    collisions: int
    settled: dict[int, int]
    oracle: dict[int, int]

    @property
    def ok(self) -> bool:
        return self.settled == self.oracle


def run_scenario(sc: Scenario, *, key: bytes | None = None) -> ScenarioReport:
    group = InProcessGroup(sc.n, sc.mode, sc.schedule, **({"key": key} if key else {}))
    oracle = LedgerOracle(range(1, sc.n + 1))
    collisions = 0
    queue = list(sc.rounds)

    while queue or group.busy():
        if group.busy():
            report = group.run_round()
        else:
            script = queue.pop(0) if queue else RoundScript()
            for _ in range(script.join):
                oracle.add_member(group.join_member())
            for idx in script.leave:
                group.leave_member(idx)
                oracle.remove_member(idx)
            m = group.server.next_round
            intents: dict[int, cl.RoundIntent] = {}
            for charger, target in script.charges:
                intents[charger] = cl.RoundIntent.charge(target)
                oracle.apply(charger, target, sc.schedule.round_value(m))
            lanes_by_charger: dict[int, dict[int, int]] = {}
            for charger, lane, target in script.lane_charges:
                lanes_by_charger.setdefault(charger, {})[lane] = target
                oracle.apply(charger, target, sc.schedule.lane_values(m)[lane])
            for charger, lanes in lanes_by_charger.items():
                intents[charger] = cl.RoundIntent.charge_lanes(lanes)
            report = group.run_round(intents, offline=script.offline)
        if report.failures:
            raise AssertionError(
                f"integrity failure in honest scenario {sc.name}: {report.failures}"
            )
        if any(o.kind is cl.OutcomeKind.COLLISION for o in report.outcomes.values()):
            collisions += 1
        oracle.check_zero_sum()

    settled = group.settle()
    live = {
        i: st.balance_cents
        for i, st in group.clients.items()
        if i not in group.departed
    }
    if live != oracle.snapshot():
        raise AssertionError(f"client ledgers diverge from oracle: {live} vs {oracle.snapshot()}")
    return ScenarioReport(
        name=sc.name,
        rounds_run=group.server.next_round,
        collisions=collisions,
        settled=settled,
        oracle=oracle.snapshot(),
    )


# ---------------------------------------------------------------------------
# random scenario generation


def random_scenario(seed: int) -> Scenario:
    """Seeded random honest scenario obeying the documented constraints.

    Collisions only on unit schedules (rollback needs the round values to
    divide the corrections), no charges at members who are offline in a round
    with two chargers, and no membership or offline churn while a collision
    window may still be resolving.
    """
    rng = random.Random(seed)
    pick = rng.random()
    if pick < 0.55:
        sched, mode_pool = unit_schedule(), [Mode.SEMIHONEST, Mode.MALICIOUS]
    elif pick < 0.85:
        sched, mode_pool = powers_schedule(), [Mode.SEMIHONEST, Mode.MALICIOUS]
    else:
        sched, mode_pool = packed_schedule(), [Mode.SEMIHONEST]
    mode = rng.choice(mode_pool)
    if sched.kind is ScheduleKind.PACKED:
        n = rng.randint(2, min(5, packed_index_limit(sched.windows)))
    else:
        n = rng.randint(2, 25)

    members = list(range(1, n + 1))
    next_index = n + 1
    unit_balance = {i: 0 for i in members}  # exact only for unit schedules
    rounds: list[RoundScript] = []
    hold = 0  # keep a few quiet rounds after scheduling a collision
    total = rng.randint(8, 18)

    while len(rounds) < total:
        if hold > 0:
            rounds.append(RoundScript())
            hold -= 1
            continue

        roll = rng.random()
        join = 0
        leave: tuple[int, ...] = ()
        # membership changes never ride a collision script: the sponsor
        # bootstrapping a newcomer must not be mid-resolution
        if sched.kind is ScheduleKind.UNIT and not 0.45 <= roll < 0.58:
            if rng.random() < 0.08 and len(members) < 25:
                join = 1  # becomes pickable next iteration, once effective
            zeroed = [i for i in members if unit_balance[i] == 0]
            if rng.random() < 0.05 and len(members) > 2 and zeroed:
                gone = rng.choice(zeroed)
                leave = (gone,)
                members.remove(gone)

        script_offline: tuple[int, ...] = ()
        if rng.random() < 0.15 and len(members) > 2:
            script_offline = tuple(
                rng.sample(members, rng.randint(1, min(2, len(members) - 2)))
            )
        online = [i for i in members if i not in script_offline]
        if sched.kind is ScheduleKind.PACKED:
            if roll < 0.55 and len(online) >= 2:
                charger = rng.choice(online)
                lane_charges = tuple(
                    (charger, k, rng.choice([i for i in online if i != charger]))
                    for k in rng.sample(range(6), rng.randint(1, 3))
                )
                rounds.append(
                    RoundScript(lane_charges=lane_charges, offline=script_offline)
                )
            elif roll < 0.65 and len(online) >= 3 and not script_offline:
                # same-lane collision between two chargers
                k = rng.randrange(6)
                c1, c2 = rng.sample(online, 2)
                t1 = rng.choice([i for i in online if i != c1])
                t2 = rng.choice([i for i in online if i != c2])
                rounds.append(RoundScript(lane_charges=((c1, k, t1), (c2, k, t2))))
                hold = 3
            else:
                rounds.append(RoundScript(offline=script_offline))
            continue

        if roll < 0.45 and len(online) >= 2:
            charger = rng.choice(online)
            target = rng.choice([i for i in members if i != charger])
            rounds.append(
                RoundScript(
                    charges=((charger, target),),
                    offline=script_offline,
                    join=join,
                    leave=leave,
                )
            )
            if sched.kind is ScheduleKind.UNIT:
                unit_balance[target] += 1
                unit_balance[charger] -= 1
        elif (
            roll < 0.58
            and sched.kind is ScheduleKind.UNIT
            and len(online) >= 3
            and not script_offline
        ):
            c1, c2 = rng.sample(online, 2)
            t1 = rng.choice([i for i in online if i != c1])
            t2 = rng.choice([i for i in online if i != c2])
            rounds.append(RoundScript(charges=((c1, t1), (c2, t2)), join=join, leave=leave))
            unit_balance[t1] += 1
            unit_balance[c1] -= 1
            unit_balance[t2] += 1
            unit_balance[c2] -= 1
            hold = 3
        else:
            rounds.append(
                RoundScript(offline=script_offline, join=join, leave=leave)
            )
        if join:
            members.append(next_index)
            unit_balance[next_index] = 0
            next_index += 1

    rounds.extend(RoundScript() for _ in range(2))
    return Scenario(
        name=f"random-{seed}",
        n=n,
        mode=mode,
        schedule=sched,
        rounds=tuple(rounds),
    )
