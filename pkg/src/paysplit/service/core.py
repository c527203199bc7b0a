"""Group hosting: submission windows, the round scheduler, recovery.

One ``GroupHost`` wraps one group's server state with everything the HTTP
layer needs: bearer tokens, the open submission window, the per-group
scheduler task and the persistence hooks.  All round math stays in
``paysplit.server``; the host never looks inside a vector.
"""

from __future__ import annotations

import asyncio
import secrets as secretlib
from dataclasses import dataclass
from pathlib import Path

from .. import ring, server
from ..config import GroupConfig, Mode
from ..server import RoundRecord, ServerError, ServerGroupState
from .store import GroupStore, rebuild_state, record_to_json


class ServiceError(Exception):
    """Domain error carrying the HTTP status it should surface as."""

    def __init__(self, status_code: int, detail: str):
        super().__init__(detail)
        self.status_code = status_code
        self.detail = detail


@dataclass
class Pending:
    vector: list[int]
    announce: int | None = None


def _new_token() -> str:
    return secretlib.token_urlsafe(16)


class GroupHost:
    def __init__(
        self,
        config: GroupConfig,
        state: ServerGroupState,
        store: GroupStore,
        join_secret: str,
        tokens: dict[int, str],
    ):
        self.config = config
        self.state = state
        self.store = store
        self.join_secret = join_secret
        self.tokens = tokens
        self.window: dict[int, Pending] = {}
        self.claims: dict[int, int] = {}
        self.lock = asyncio.Lock()
        self._scheduler: asyncio.Task | None = None

    # -- construction and persistence -------------------------------------

    @classmethod
    def create(cls, root: Path | str, config: GroupConfig, a: int) -> "GroupHost":
        group_id = secretlib.token_hex(6)
        state = server.server_setup(group_id, config.n, a)
        store = GroupStore(root, group_id)
        store.create()
        host = cls(config, state, store, secretlib.token_urlsafe(12), {})
        host.persist_snapshot()
        return host

    @classmethod
    def load(cls, root: Path | str, group_id: str) -> "GroupHost":
        store = GroupStore(root, group_id)
        snap = store.load_snapshot()
        state = rebuild_state(snap, store.load_log())
        config = GroupConfig.from_json(snap["config"])
        tokens = {int(k): v for k, v in snap["tokens"].items()}
        return cls(config, state, store, snap["join_secret"], tokens)

    def persist_snapshot(self) -> None:
        st = self.state
        self.store.save_snapshot(
            {
                "group_id": st.group_id,
                "config": self.config.to_json(),
                "a": st.a,
                "join_secret": self.join_secret,
                "tokens": {str(i): t for i, t in self.tokens.items()},
                "members": {
                    str(i): {"join_round": m.join_round, "leave_round": m.leave_round}
                    for i, m in st.members.items()
                },
                "next_index": st.next_index,
                "pending_events": list(st.pending_events),
                "settling": st.settling,
            }
        )

    # -- auth --------------------------------------------------------------

    def member_for_token(self, token: str) -> int:
        for idx, t in self.tokens.items():
            if secretlib.compare_digest(t, token):
                return idx
        raise ServiceError(401, "unknown bearer token")

    # -- membership ----------------------------------------------------------

    def join(self, join_secret: str) -> dict:
        if not secretlib.compare_digest(self.join_secret, join_secret):
            raise ServiceError(403, "wrong join secret")
        if self.state.settling:
            raise ServiceError(409, "group is settling")
        idx = None
        for i in range(1, self.config.n + 1):
            rec = self.state.members.get(i)
            if i not in self.tokens and rec is not None and rec.leave_round is None:
                idx = i
                break
        if idx is None:
            try:
                idx = server.add_member(self.state)
            except ServerError as exc:
                raise ServiceError(409, str(exc)) from exc
        token = _new_token()
        self.tokens[idx] = token
        self.persist_snapshot()
        return {
            "index": idx,
            "token": token,
            "a": self.state.a,
            "join_round": self.state.members[idx].join_round,
            "next_round": self.state.next_round,
            "config": self.config.to_json(),
        }

    def leave(self, index: int, attested_zero: bool) -> int:
        if self.state.settling:
            raise ServiceError(409, "group is settling")
        try:
            server.remove_member(self.state, index, attested_zero=attested_zero)
        except ServerError as exc:
            raise ServiceError(409, str(exc)) from exc
        self.persist_snapshot()
        return self.state.members[index].leave_round

    # -- rounds ---------------------------------------------------------------

    def ensure_scheduler(self) -> None:
        if self.state.settling:
            return
        if self._scheduler is None or self._scheduler.done():
            self._scheduler = asyncio.get_running_loop().create_task(
                self._schedule_loop()
            )

    async def _schedule_loop(self) -> None:
        period = self.config.round_period_ms / 1000.0
        while True:
            await asyncio.sleep(period)
            async with self.lock:
                if self.state.settling:
                    return
                self._deadline_close()

    def _deadline_close(self) -> None:
        """Round period elapsed: run the round with whatever arrived."""
        if not self.window:
            if self.config.on_demand_rounds and not self.state.pending_events:
                return  # nothing queued, nothing to flush; round stays open
            if not self.config.offline_substitution:
                return  # cannot substitute, keep waiting for submissions
        missing = [
            i for i in self.state.roster(self.state.next_round) if i not in self.window
        ]
        if missing and not self.config.offline_substitution:
            # Re-run policy: keep what arrived, extend the deadline.  The
            # round number is not consumed until every vector is present.
            return
        self._close_round()

    async def submit(
        self, index: int, m: int, vector: list[int], announce: int | None
    ) -> dict:
        async with self.lock:
            st = self.state
            if st.settling:
                raise ServiceError(409, "group is settling")
            if m != st.next_round:
                raise ServiceError(409, f"current round is {st.next_round}, not {m}")
            roster = st.roster(m)
            if index not in roster:
                raise ServiceError(403, f"member {index} not active in round {m}")
            if len(vector) != len(roster):
                raise ServiceError(
                    422, f"vector has {len(vector)} entries, roster has {len(roster)}"
                )
            if announce is not None and not self.config.announcements:
                raise ServiceError(422, "group does not use announcements")
            self.window[index] = Pending(vector=vector, announce=announce)
            closed = None
            if all(i in self.window for i in roster):
                closed = self._close_round()
            return {"round": m, "closed": closed is not None}

    def _close_round(self) -> RoundRecord:
        """Aggregate the open window into a round record.  Lock held."""
        st = self.state
        m = st.next_round
        subs = {i: p.vector for i, p in self.window.items()}
        announcements = None
        if self.config.announcements:
            announcements = {
                i: p.announce for i, p in self.window.items() if p.announce is not None
            }
        record = server.process_round(
            st,
            subs,
            value=self.config.schedule.round_value(m),
            substitute_offline=self.config.offline_substitution,
            announcements=announcements,
        )
        self.store.append(record_to_json(record))
        if record.events:
            # The round consumed the pending events; the snapshot must agree.
            self.persist_snapshot()
        self.window.clear()
        return record

    # -- digests and catch-up ---------------------------------------------

    def member_balance_at(self, index: int, m: int) -> int:
        """The member's own cumulative balance entry right after round m."""
        bal = 0
        for rec in self.state.log:
            if rec.round_no > m:
                break
            if rec.rolled_back or index not in rec.roster:
                continue
            k = rec.roster.index(index)
            wa = ring.mul(rec.value, self.state.a)
            bal = ring.sub(ring.add(bal, rec.vec_sum[k]), wa)
        return bal

    def digest_view(self, index: int, m: int, include_sums: bool) -> dict:
        st = self.state
        if m >= st.next_round:
            raise ServiceError(404, f"round {m} not processed yet")
        try:
            rec = st.record(m)
        except ServerError as exc:
            raise ServiceError(404, str(exc)) from exc
        if index not in rec.roster:
            raise ServiceError(403, f"member {index} not active in round {m}")
        view = {
            "round": m,
            "value": rec.value,
            "v_prime": rec.v_prime,
            "c": rec.c,
            "b_entry": self.member_balance_at(index, m),
            "status": int(rec.status),
            "offline": list(rec.offline),
            "events": list(rec.events),
            "rolled_back": rec.rolled_back,
            "announce_sum": rec.announce_sum,
        }
        if include_sums:
            view["member_sums"] = dict(rec.member_sums)
        return view

    def log_slice(self, index: int, start: int) -> list[dict]:
        """Catch-up records for one member, own balance entries only."""
        out = []
        bal = 0
        for rec in self.state.log:
            mine = index in rec.roster
            if mine and not rec.rolled_back:
                k = rec.roster.index(index)
                wa = ring.mul(rec.value, self.state.a)
                bal = ring.sub(ring.add(bal, rec.vec_sum[k]), wa)
            if mine and rec.round_no >= start:
                out.append(
                    {
                        "round": rec.round_no,
                        "value": rec.value,
                        "v_prime": rec.v_prime,
                        "c": rec.c,
                        "b_entry": bal,
                        "status": int(rec.status),
                        "offline": list(rec.offline),
                        "events": list(rec.events),
                        "rolled_back": rec.rolled_back,
                        "announce_sum": rec.announce_sum,
                    }
                )
        return out

    # -- integrity ------------------------------------------------------------

    def report(self, index: int, m: int) -> dict:
        st = self.state
        try:
            rec = st.record(m)
        except ServerError as exc:
            raise ServiceError(404, str(exc)) from exc
        if index not in rec.roster:
            raise ServiceError(403, f"member {index} not active in round {m}")
        if not rec.rolled_back:
            try:
                server.rollback_round(st, m)
            except ServerError as exc:
                raise ServiceError(409, str(exc)) from exc
            self.store.append({"kind": "rollback", "round_no": m})
            self.persist_snapshot()
        return {"round": m, "rolled_back": True}

    def reveal(self, m: int, accused: int, target: int) -> int:
        try:
            return server.reveal_entry(self.state, m, accused, target)
        except ServerError as exc:
            raise ServiceError(410, str(exc)) from exc

    # -- settle ------------------------------------------------------------

    def settle(self) -> dict:
        st = self.state
        if not st.settling:
            server.settle_broadcast(st)
            self.store.append({"kind": "settle"})
            self.persist_snapshot()
        return {
            "settle_round": st.next_round,
            "balances": {str(i): b for i, b in st.balances.items()},
        }

    def put_claim(self, index: int, claim: int) -> None:
        if self.config.mode is not Mode.MALICIOUS:
            raise ServiceError(422, "claims are a malicious-mode step")
        if not self.state.settling:
            raise ServiceError(409, "settle has not begun")
        self.claims[index] = claim

    def claims_view(self) -> dict:
        if not self.state.settling:
            raise ServiceError(409, "settle has not begun")
        roster = self.state.roster()
        missing = [i for i in roster if i not in self.claims]
        if missing:
            raise ServiceError(425, f"claims pending from members {missing}")
        return {"claims": {str(i): self.claims[i] for i in roster}}

    # -- info ---------------------------------------------------------------

    def info(self) -> dict:
        st = self.state
        return {
            "group_id": st.group_id,
            "config": self.config.to_json(),
            "a": st.a,
            "roster": list(st.roster()),
            "next_round": st.next_round,
            "settling": st.settling,
        }


class ServiceRegistry:
    """All groups hosted by one service process, keyed by group id."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.groups: dict[str, GroupHost] = {}
        for gid in GroupStore.list_groups(self.root):
            self.groups[gid] = GroupHost.load(self.root, gid)

    def create(self, config: GroupConfig, a: int) -> GroupHost:
        host = GroupHost.create(self.root, config, a)
        self.groups[host.state.group_id] = host
        return host

    def get(self, group_id: str) -> GroupHost:
        host = self.groups.get(group_id)
        if host is None:
            raise ServiceError(404, f"no group {group_id!r}")
        return host
