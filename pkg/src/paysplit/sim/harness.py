"""In-process group: a server and all member clients wired directly together.

The simulator, the adversary suites and the benchmarks all drive this; the
wire service reuses the same client/server modules over HTTP instead.

Offline members do not process rounds live; their digests queue up and replay
through the normal catch-up path when they next participate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from .. import client as cl
from .. import ring, server as sv
from ..config import Mode
from ..masks import GroupSecret
from ..schedule import Schedule

DigestMutator = Callable[[int, cl.RoundDigest], cl.RoundDigest]
VectorMutator = Callable[[int, list[int]], list[int]]

DEFAULT_KEY = bytes.fromhex("00112233445566778899aabbccddeeff")


@dataclass
class RoundReport:
    round_no: int
    outcomes: dict[int, cl.RoundOutcome]
    failures: dict[int, str]
    record: sv.RoundRecord


class InProcessGroup:
    def __init__(
        self,
        n: int,
        mode: Mode,
        sched: Schedule,
        *,
        key: bytes = DEFAULT_KEY,
        announcements: bool = False,
        group_id: str = "sim",
    ):
        self.secret = GroupSecret(key)
        self.mode = mode
        self.sched = sched
        self.announcements = announcements
        self.clients: dict[int, cl.ClientGroupState] = {
            i: cl.setup_client(self.secret, i, n, mode, sched) for i in range(1, n + 1)
        }
        self.server = sv.server_setup(group_id, n, cl.setup_constant(self.secret, mode))
        self.pending: dict[int, list[cl.RoundDigest]] = {i: [] for i in self.clients}
        self.departed: set[int] = set()
        self.pending_joins: list[int] = []

    # -- membership ---------------------------------------------------------

    def join_member(self) -> int:
        """Register a newcomer; their client boots once the join-event round
        has been verified by a sponsor whose drift snapshot they can copy."""
        idx = sv.add_member(self.server)
        self.pending_joins.append(idx)
        return idx

    def _bootstrap_joiners(self) -> None:
        for idx in list(self.pending_joins):
            sponsor = next(
                (
                    st
                    for i, st in self.clients.items()
                    if i not in self.departed
                    and not self.pending[i]
                    and idx in st.members
                    and not st.in_resolution
                ),
                None,
            )
            if sponsor is None:
                continue
            self.clients[idx] = cl.join_client(
                self.secret, idx, self.mode, self.sched, sponsor
            )
            self.pending[idx] = []
            self.pending_joins.remove(idx)

    def leave_member(self, idx: int) -> None:
        if self.pending[idx]:
            cl.catch_up(self.clients[idx], self.pending[idx])
            self.pending[idx] = []
        st = self.clients[idx]
        sv.remove_member(self.server, idx, attested_zero=st.balance_cents == 0)
        self.departed.add(idx)

    # -- rounds --------------------------------------------------------------

    def busy(self) -> bool:
        return any(
            st.in_resolution
            for i, st in self.clients.items()
            if i not in self.departed
        )

    def run_round(
        self,
        intents: Mapping[int, cl.RoundIntent] | None = None,
        *,
        offline: Iterable[int] = (),
        vector_mutators: Mapping[int, VectorMutator] | None = None,
        digest_mutator: DigestMutator | None = None,
        auto_report: bool = True,
    ) -> RoundReport:
        intents = dict(intents or {})
        offline = set(offline)
        self._bootstrap_joiners()
        m = self.server.next_round
        value = self.sched.round_value(m)
        roster = self.server.roster(m)

        subs: dict[int, list[int]] = {}
        announce_sum = 0
        for i in roster:
            if i in offline or i not in self.clients:
                continue
            st = self.clients[i]
            if self.pending[i]:
                cl.catch_up(st, self.pending[i])
                self.pending[i] = []
            # a member that rejected the previous round resyncs from the log
            # once the server has rolled it back (the wire service serves the
            # same record through catch-up)
            while st.next_round < m:
                rec = next(r for r in self.server.log if r.round_no == st.next_round)
                if not rec.rolled_back:
                    raise AssertionError(
                        f"member {i} is behind at round {st.next_round} with no rollback"
                    )
                cl.process_round_digest(
                    st,
                    cl.RoundDigest(
                        round_no=rec.round_no,
                        v_prime=rec.v_prime,
                        c=rec.c,
                        b_entry=0,
                        status=rec.status,
                        offline=rec.offline,
                        events=rec.events,
                        rolled_back=True,
                    ),
                )
            if i in self.departed:
                # a leaver is still expected in the round carrying the event
                subs[i] = cl.build_round_vector(st, cl.RoundIntent.idle())
                continue
            if st.phase in (cl.Phase.RESEND, cl.Phase.ROLLBACK):
                vec = cl.collision_resolution_next(st)
            else:
                vec = cl.build_round_vector(st, intents.get(i, cl.RoundIntent.idle()))
            if vector_mutators and i in vector_mutators:
                vec = vector_mutators[i](i, vec)
            subs[i] = vec
            if self.announcements:
                announce_sum = ring.add(
                    announce_sum,
                    cl.build_amount_announcement(st, intents.get(i, cl.RoundIntent.idle()).announce_total),
                )

        record = sv.process_round(self.server, subs, value=value)

        outcomes: dict[int, cl.RoundOutcome] = {}
        failures: dict[int, str] = {}
        for i in roster:
            if i in self.departed or i not in self.clients:
                continue
            digest = cl.RoundDigest(
                round_no=record.round_no,
                v_prime=record.v_prime,
                c=record.c,
                b_entry=self.server.balances[i],
                status=record.status,
                offline=record.offline,
                events=record.events,
                announce_sum=announce_sum if self.announcements else None,
            )
            if digest_mutator:
                digest = digest_mutator(i, digest)
            if i in offline:
                self.pending[i].append(digest)
                continue
            out = cl.process_round_digest(self.clients[i], digest)
            outcomes[i] = out
            if out.kind is cl.OutcomeKind.INTEGRITY_FAILURE:
                failures[i] = out.note

        if failures and auto_report:
            self.report_error()
        self._bootstrap_joiners()
        return RoundReport(record.round_no, outcomes, failures, record)

    def report_error(self) -> None:
        try:
            sv.rollback_round(self.server, self.server.next_round - 1)
        except sv.ServerError:
            pass  # several members report the same round

    def run_until_quiet(self, limit: int = 64) -> list[RoundReport]:
        reports = []
        while self.busy():
            if len(reports) >= limit:
                raise AssertionError("resolution did not drain")
            reports.append(self.run_round())
        return reports

    # -- settle ---------------------------------------------------------------

    def settle(self) -> dict[int, int]:
        self._bootstrap_joiners()
        for i, queued in self.pending.items():
            if queued and i not in self.departed:
                cl.catch_up(self.clients[i], queued)
                self.pending[i] = []
        balances = sv.settle_broadcast(self.server)
        settle_round = self.server.next_round
        active = [i for i in self.server.roster() if i not in self.departed]
        claims = None
        if self.mode is Mode.MALICIOUS:
            claims = {
                i: cl.settle_prepare(self.clients[i], settle_round) for i in active
            }
        results = [
            cl.settle(self.clients[i], settle_round, balances, claims) for i in active
        ]
        for res in results[1:]:
            if res != results[0]:
                raise AssertionError("members disagree on settled balances")
        return results[0]
