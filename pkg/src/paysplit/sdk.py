"""Client runtime over the wire service.

A ``MemberSession`` owns one member's protocol state for one group, talks to
the service over HTTP and persists itself to a single JSON state file after
every processed round.  The file is versioned and its round number never
decreases; loading an older file than what was already saved is refused.

Joining is key-first: initial members receive the group key out of band and
claim one of the setup slots.  Members added later are invited by an existing
member, who performs the join call on their behalf, waits for the membership
event to ride a round, and exports a bundle with the key, the token and a
drift snapshot (the server cannot serve pre-join drift history).
"""

from __future__ import annotations

import base64
import json
import os
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import httpx

from . import client as protocol
from . import planner, wire
from .client import (
    ClientGroupState,
    CollisionState,
    MemberView,
    OutcomeKind,
    Phase,
    ProtocolError,
    RoundDigest,
    RoundIntent,
    RoundMeta,
    RoundOutcome,
)
from .config import GroupConfig, Mode
from .masks import GroupSecret
from .schedule import Schedule, ScheduleKind
from .server import Status

STATE_VERSION = 1


class SdkError(RuntimeError):
    pass


class IntegrityAlert(SdkError):
    """A round failed verification; the protocol aborted or rolled it back."""


@dataclass
class ClientConfig:
    server: str
    state_path: Path
    auto_accept_threshold_cents: int | None = None
    poll_interval_s: float = 0.05
    round_timeout_s: float = 60.0


# ---------------------------------------------------------------------------
# state file codecs


def _intent_json(intent: RoundIntent | None) -> dict | None:
    if intent is None:
        return None
    return {
        "target": intent.target,
        "lane_targets": {str(k): v for k, v in intent.lane_targets.items()},
        "announce_total": intent.announce_total,
    }


def _intent_back(data: dict | None) -> RoundIntent | None:
    if data is None:
        return None
    return RoundIntent(
        target=data["target"],
        lane_targets={int(k): v for k, v in data["lane_targets"].items()},
        announce_total=data["announce_total"],
    )


def _digest_json(d: RoundDigest) -> dict:
    return {
        "round_no": d.round_no,
        "v_prime": d.v_prime,
        "c": d.c,
        "b_entry": d.b_entry,
        "status": int(d.status),
        "offline": list(d.offline),
        "events": list(d.events),
        "announce_sum": d.announce_sum,
        "rolled_back": d.rolled_back,
    }


def _digest_back(data: dict) -> RoundDigest:
    return RoundDigest(
        round_no=data["round_no"],
        v_prime=data["v_prime"],
        c=data["c"],
        b_entry=data["b_entry"],
        status=Status(data["status"]),
        offline=tuple(data["offline"]),
        events=tuple(data["events"]),
        announce_sum=data["announce_sum"],
        rolled_back=data["rolled_back"],
    )


def _meta_json(meta: RoundMeta) -> dict:
    return {
        "value": meta.value,
        "roster": list(meta.roster),
        "offline": list(meta.offline),
        "kind": meta.kind,
        "b_before": meta.b_before,
        "self_delta_cents": meta.self_delta_cents,
    }


def _meta_back(data: dict) -> RoundMeta:
    return RoundMeta(
        value=data["value"],
        roster=tuple(data["roster"]),
        offline=tuple(data["offline"]),
        kind=data["kind"],
        b_before=data["b_before"],
        self_delta_cents=data["self_delta_cents"],
    )


def _collision_json(col: CollisionState | None) -> dict | None:
    if col is None:
        return None
    return {
        "round0": col.round0,
        "value0": col.value0,
        "x_self": col.x_self,
        "x_lanes": None if col.x_lanes is None else list(col.x_lanes),
        "own_intent": _intent_json(col.own_intent),
        "chargers": list(col.chargers),
        "value1": col.value1,
        "recharge_queue": list(col.recharge_queue),
    }


def _collision_back(data: dict | None) -> CollisionState | None:
    if data is None:
        return None
    return CollisionState(
        round0=data["round0"],
        value0=data["value0"],
        x_self=data["x_self"],
        x_lanes=None if data["x_lanes"] is None else tuple(data["x_lanes"]),
        own_intent=_intent_back(data["own_intent"]),
        chargers=tuple(data["chargers"]),
        value1=data["value1"],
        recharge_queue=list(data["recharge_queue"]),
    )


def state_to_json(state: ClientGroupState) -> dict:
    return {
        "key": base64.urlsafe_b64encode(state.secret.key).decode().rstrip("="),
        "index": state.index,
        "mode": state.mode.value,
        "schedule": state.schedule.to_json(),
        "members": {
            str(i): {"join_round": v.join_round, "leave_round": v.leave_round}
            for i, v in state.members.items()
        },
        "next_round": state.next_round,
        "b_reported": state.b_reported,
        "balance_cents": state.balance_cents,
        "drift": {str(i): v for i, v in state.drift.items()},
        "digests": [_digest_json(d) for d in state.digests],
        "round_meta": {str(m): _meta_json(v) for m, v in state.round_meta.items()},
        "phase": state.phase.value,
        "collision": _collision_json(state.collision),
        "sent_intents": {str(m): _intent_json(v) for m, v in state.sent_intents.items()},
        "settling": state.settling,
    }


def state_from_json(data: dict) -> ClientGroupState:
    key = base64.urlsafe_b64decode(data["key"] + "==")
    state = ClientGroupState(
        secret=GroupSecret(key),
        index=data["index"],
        mode=Mode(data["mode"]),
        schedule=Schedule.from_json(data["schedule"]),
        members={
            int(i): MemberView(int(i), v["join_round"], v["leave_round"])
            for i, v in data["members"].items()
        },
        next_round=data["next_round"],
        b_reported=data["b_reported"],
        balance_cents=data["balance_cents"],
        drift={int(i): v for i, v in data["drift"].items()},
        round_meta={int(m): _meta_back(v) for m, v in data["round_meta"].items()},
        phase=Phase(data["phase"]),
        collision=_collision_back(data["collision"]),
        sent_intents={int(m): _intent_back(v) for m, v in data["sent_intents"].items()},
        settling=data["settling"],
    )
    for d in data["digests"]:
        state.digests.append(_digest_back(d))
    return state


def digest_from_wire(body: dict) -> RoundDigest:
    """Round broadcast out of the service's JSON envelope."""
    core = wire.decode_digest_core(wire.b64d(body["digest"]))
    return RoundDigest(
        round_no=body["round"],
        v_prime=core.v_prime,
        c=core.c,
        b_entry=core.b_entry,
        status=Status(core.status),
        offline=tuple(body["offline"]),
        events=tuple(body["events"]),
        announce_sum=(
            None
            if body.get("announce_sum") is None
            else wire.decode_word(body["announce_sum"])
        ),
        rolled_back=body["rolled_back"],
    )


# ---------------------------------------------------------------------------
# the session


class MemberSession:
    def __init__(self, config: ClientConfig, http: httpx.Client | None = None):
        self.config = config
        self.http = http or httpx.Client(base_url=config.server, timeout=10.0)
        raw = json.loads(Path(config.state_path).read_text())
        if raw.get("version") != STATE_VERSION:
            raise SdkError(f"unsupported state file version {raw.get('version')}")
        self.group_id: str = raw["group_id"]
        self.token: str = raw["token"]
        self.join_secret: str | None = raw.get("join_secret")
        self.announcements: bool = raw.get("announcements", False)
        self.review: list[dict] = raw.get("review", [])
        self.state = state_from_json(raw["state"])

    # -- persistence -------------------------------------------------------

    def save(self) -> None:
        path = Path(self.config.state_path)
        if path.exists():
            prior = json.loads(path.read_text())
            if prior["state"]["next_round"] > self.state.next_round:
                raise SdkError(
                    "refusing to write a state file older than the one on disk"
                )
        payload = {
            "version": STATE_VERSION,
            "server": self.config.server,
            "group_id": self.group_id,
            "token": self.token,
            "join_secret": self.join_secret,
            "announcements": self.announcements,
            "review": self.review,
            "state": state_to_json(self.state),
        }
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, indent=1))
        os.replace(tmp, path)

    @staticmethod
    def _write_initial(
        config: ClientConfig,
        *,
        group_id: str,
        token: str,
        join_secret: str | None,
        announcements: bool,
        state: ClientGroupState,
        http: httpx.Client | None = None,
    ) -> "MemberSession":
        path = Path(config.state_path)
        if path.exists():
            raise SdkError(f"state file {path} already exists")
        path.write_text(
            json.dumps(
                {
                    "version": STATE_VERSION,
                    "server": config.server,
                    "group_id": group_id,
                    "token": token,
                    "join_secret": join_secret,
                    "announcements": announcements,
                    "review": [],
                    "state": state_to_json(state),
                }
            )
        )
        return MemberSession(config, http=http)

    # -- constructors ------------------------------------------------------

    @classmethod
    def create_group(
        cls,
        config: ClientConfig,
        group_config: GroupConfig,
        key: bytes | None = None,
        http: httpx.Client | None = None,
    ) -> "MemberSession":
        """Create a group, claim the first member slot, save the state file."""
        key = key or os.urandom(16)
        secret = GroupSecret(key)
        a = protocol.setup_constant(secret, group_config.mode)
        http = http or httpx.Client(base_url=config.server, timeout=10.0)
        r = http.post(
            "/groups",
            json={"config": group_config.to_json(), "a": wire.encode_word(a)},
        )
        _expect(r, 200)
        group_id = r.json()["group_id"]
        join_secret = r.json()["join_secret"]
        r = http.post(f"/groups/{group_id}/join", json={"join_secret": join_secret})
        _expect(r, 200)
        got = r.json()
        state = protocol.setup_client(
            secret, got["index"], group_config.n, group_config.mode, group_config.schedule
        )
        return cls._write_initial(
            config,
            group_id=group_id,
            token=got["token"],
            join_secret=join_secret,
            announcements=group_config.announcements,
            state=state,
            http=http,
        )

    @classmethod
    def join_group(
        cls,
        config: ClientConfig,
        group_id: str,
        join_secret: str,
        key: bytes,
        http: httpx.Client | None = None,
    ) -> "MemberSession":
        """Claim a setup slot of a fresh group (key received out of band)."""
        secret = GroupSecret(key)
        http = http or httpx.Client(base_url=config.server, timeout=10.0)
        r = http.post(f"/groups/{group_id}/join", json={"join_secret": join_secret})
        _expect(r, 200)
        got = r.json()
        group_config = GroupConfig.from_json(got["config"])

        def bail(message: str) -> None:
            # the join above already claimed a membership; hand it back so the
            # group is not stuck substituting a ghost forever
            http.post(
                f"/groups/{group_id}/leave",
                headers={"Authorization": f"Bearer {got['token']}"},
                json={"attested_zero": True},
            )
            raise SdkError(message)

        if not protocol.verify_setup_constant(
            secret, group_config.mode, wire.decode_word(got["a"])
        ):
            bail("server's setup constant does not match the group key")
        if got["join_round"] != 0:
            bail("group is already running; ask a member for an invite bundle")
        state = protocol.setup_client(
            secret, got["index"], group_config.n, group_config.mode, group_config.schedule
        )
        return cls._write_initial(
            config,
            group_id=group_id,
            token=got["token"],
            join_secret=join_secret,
            announcements=group_config.announcements,
            state=state,
            http=http,
        )

    def invite(self) -> dict:
        """Add a member on their behalf and build their bootstrap bundle.

        Blocks until the join event has ridden a round: the bundle must carry
        the drift snapshot of a state that already knows the newcomer.
        """
        if self.join_secret is None:
            raise SdkError("this state file holds no join secret")
        self.catch_up()
        r = self.http.post(
            f"/groups/{self.group_id}/join", json={"join_secret": self.join_secret}
        )
        _expect(r, 200)
        got = r.json()
        deadline = time.monotonic() + self.config.round_timeout_s
        while self.state.next_round <= got["join_round"] - 1 or self.state.in_resolution:
            if time.monotonic() > deadline:
                raise SdkError("timed out waiting for the join event to ride a round")
            self.step()
        st = self.state
        if got["index"] not in st.members:
            raise SdkError("join event never arrived; cannot build the bundle")
        # the snapshot's newest round is still rollback-able by a late report;
        # hand over its meta so the newcomer can revert the inherited drift
        last = st.round_meta.get(st.next_round - 1)
        last_meta = None
        if last is not None and last.kind == "normal":
            last_meta = {
                "round": st.next_round - 1,
                "value": last.value,
                "roster": list(last.roster),
                "offline": list(last.offline),
            }
        return {
            "version": STATE_VERSION,
            "server": self.config.server,
            "group_id": self.group_id,
            "token": got["token"],
            "index": got["index"],
            "key": base64.urlsafe_b64encode(st.secret.key).decode().rstrip("="),
            "mode": st.mode.value,
            "schedule": st.schedule.to_json(),
            "announcements": self.announcements,
            "join_secret": self.join_secret,
            "members": {
                str(i): {"join_round": v.join_round, "leave_round": v.leave_round}
                for i, v in st.members.items()
            },
            "drift": {str(i): v for i, v in st.drift.items()},
            "next_round": st.next_round,
            "last_meta": last_meta,
        }

    @classmethod
    def from_bundle(
        cls, config: ClientConfig, bundle: dict, http: httpx.Client | None = None
    ) -> "MemberSession":
        """Late joiner: state built from an inviter's bundle, no HTTP needed."""
        if bundle.get("version") != STATE_VERSION:
            raise SdkError("unsupported bundle version")
        key = base64.urlsafe_b64decode(bundle["key"] + "==")
        state = ClientGroupState(
            secret=GroupSecret(key),
            index=bundle["index"],
            mode=Mode(bundle["mode"]),
            schedule=Schedule.from_json(bundle["schedule"]),
            members={
                int(i): MemberView(int(i), v["join_round"], v["leave_round"])
                for i, v in bundle["members"].items()
            },
            drift={int(i): v for i, v in bundle["drift"].items()},
            next_round=bundle["next_round"],
        )
        last_meta = bundle.get("last_meta")
        if last_meta is not None:
            state.round_meta[int(last_meta["round"])] = RoundMeta(
                value=last_meta["value"],
                roster=tuple(last_meta["roster"]),
                offline=tuple(last_meta["offline"]),
                kind="normal",
            )
        return cls._write_initial(
            config,
            group_id=bundle["group_id"],
            token=bundle["token"],
            join_secret=bundle.get("join_secret"),
            announcements=bundle.get("announcements", False),
            state=state,
            http=http,
        )

    # -- plumbing -----------------------------------------------------------

    @property
    def _auth(self) -> dict:
        return {"Authorization": f"Bearer {self.token}"}

    def _get(self, path: str, **params) -> httpx.Response:
        return self.http.get(
            f"/groups/{self.group_id}{path}", headers=self._auth, params=params
        )

    def _post(self, path: str, body: dict | None = None) -> httpx.Response:
        return self.http.post(
            f"/groups/{self.group_id}{path}", headers=self._auth, json=body or {}
        )

    # -- syncing -------------------------------------------------------------

    def catch_up(self) -> list[RoundOutcome]:
        """Process every round the server has that we have not."""
        r = self._get("/log", start=self.state.next_round)
        _expect(r, 200)
        outcomes = []
        for body in r.json()["entries"]:
            digest = digest_from_wire(body)
            out = protocol.process_round_digest(self.state, digest)
            self._note_outcome(out)
            outcomes.append(out)
            if out.kind is OutcomeKind.INTEGRITY_FAILURE and not digest.rolled_back:
                self._post(f"/rounds/{digest.round_no}/report")
                break  # resync after the rollback lands
        if outcomes:
            self.save()
        return outcomes

    def _poll_digest(self, m: int) -> RoundDigest:
        deadline = time.monotonic() + self.config.round_timeout_s
        while True:
            r = self._get(f"/rounds/{m}/digest")
            if r.status_code == 200:
                return digest_from_wire(r.json())
            if r.status_code != 404:
                _expect(r, 200)
            if time.monotonic() > deadline:
                raise SdkError(f"round {m} never closed (waited {self.config.round_timeout_s}s)")
            time.sleep(self.config.poll_interval_s)

    def step(self, intent: RoundIntent | None = None) -> RoundOutcome:
        """Submit one round (intent, cover or resolution vector) and verify it."""
        st = self.state
        for _ in range(8):
            self.catch_up()
            if st.settling:
                raise SdkError("group has settled")
            m = st.next_round
            if st.phase in (Phase.RESEND, Phase.ROLLBACK):
                vec = protocol.collision_resolution_next(st)
            else:
                vec = protocol.build_round_vector(st, intent or RoundIntent.idle())
            body = {"vector": wire.b64e(wire.encode_submission(vec))}
            if self.announcements:
                total = intent.announce_total if intent else None
                body["announce"] = wire.encode_word(
                    protocol.build_amount_announcement(st, total)
                )
            r = self._post(f"/rounds/{m}/submission", body)
            if r.status_code == 200:
                digest = self._poll_digest(m)
                out = protocol.process_round_digest(st, digest)
                self._note_outcome(out)
                if out.kind is OutcomeKind.INTEGRITY_FAILURE and not digest.rolled_back:
                    self._post(f"/rounds/{m}/report")
                self.save()
                return out
            if r.status_code == 409 and "current round" in r.json().get("detail", ""):
                continue  # round moved under us; resync and retry
            _expect(r, 200)
        raise SdkError("could not land a submission; server kept moving")

    def _note_outcome(self, out: RoundOutcome) -> None:
        if out.self_delta_cents > 0:
            chargers = {ev.charger for ev in out.charges if ev.to_self}
            threshold = self.config.auto_accept_threshold_cents
            entry = {
                "round": out.round_no,
                "cents": out.self_delta_cents,
                "charger": chargers.pop() if len(chargers) == 1 else None,
                "auto_accepted": threshold is not None
                and out.self_delta_cents <= threshold,
            }
            if out.announced_total is not None:
                entry["announced_total"] = out.announced_total
            self.review.append(entry)

    # -- commands -------------------------------------------------------------

    def charge(self, target: int, amount_cents: int) -> list[RoundOutcome]:
        """Run a transfer plan to completion, riding out any collision."""
        st = self.state
        plan = planner.plan_transfer(amount_cents, target, st.schedule)
        steps = deque(plan.steps)
        outcomes: list[RoundOutcome] = []
        guard = 0
        while steps:
            guard += 1
            if guard > 64 * (len(plan.steps) + 2):
                raise SdkError("charge plan failed to converge")
            self.catch_up()
            if st.in_resolution:
                outcomes.append(self.step())
                continue
            step = steps[0]
            if not self._position_matches(step, st.next_round):
                outcomes.append(self.step())  # idle until the value comes around
                continue
            if st.schedule.kind is ScheduleKind.PACKED:
                intent = RoundIntent.charge_lanes({k: target for k in step.lanes})
            else:
                intent = RoundIntent.charge(target)
            out = self.step(intent)
            outcomes.append(out)
            if out.kind in (OutcomeKind.CHARGED, OutcomeKind.COLLISION):
                # a collision re-issues the charge through the recharge queue
                steps.popleft()
            elif out.kind is OutcomeKind.INTEGRITY_FAILURE:
                raise IntegrityAlert(f"round {out.round_no}: {out.note}")
        while st.in_resolution:
            outcomes.append(self.step())
        return outcomes

    def _position_matches(self, step: planner.PlanStep, m: int) -> bool:
        sched = self.state.schedule
        if sched.kind is ScheduleKind.UNIT:
            return True
        if sched.kind is ScheduleKind.CYCLE:
            return m % len(sched.cycle) == step.cycle_pos
        return sched.window(m) == step.cycle_pos

    def reject(self, m: int) -> list[RoundOutcome]:
        """Counter-charge the member who charged us in round m."""
        self.catch_up()
        st = self.state
        meta = st.round_meta.get(m)
        if meta is None:
            raise SdkError(f"round {m} unknown; catch up first")
        if meta.self_delta_cents <= 0:
            raise SdkError(f"round {m} did not charge this member")
        events = protocol.trace(st, m)
        chargers = {ev.charger for ev in events}
        if not chargers:
            raise SdkError(f"round {m} carried no charge")
        if len(chargers) > 1:
            raise SdkError("several members charged that round; reject each by hand")
        charger = chargers.pop()
        if charger == st.index:
            raise SdkError("cannot reject own charge")
        return self.charge(charger, meta.self_delta_cents)

    def settle(self) -> dict[int, int]:
        """Freeze the group and recover everyone's true balance in cents."""
        self.catch_up()
        st = self.state
        if st.in_resolution:
            raise SdkError("collision resolution pending; run catch-up or steps first")
        r = self._post("/settle")
        _expect(r, 200)
        settle_round = r.json()["settle_round"]
        balances = {
            int(k): wire.decode_word(v) for k, v in r.json()["balances"].items()
        }
        claims = None
        if st.mode is Mode.MALICIOUS:
            word = protocol.settle_prepare(st, settle_round)
            _expect(self._post("/settle/claim", {"claim": wire.encode_word(word)}), 200)
            deadline = time.monotonic() + self.config.round_timeout_s
            while True:
                r = self._get("/settle/claims")
                if r.status_code == 200:
                    claims = {
                        int(k): wire.decode_word(v)
                        for k, v in r.json()["claims"].items()
                    }
                    break
                if time.monotonic() > deadline:
                    raise SdkError("timed out waiting for every member's settle claim")
                time.sleep(self.config.poll_interval_s)
        try:
            result = protocol.settle(st, settle_round, balances, claims)
        except ProtocolError as exc:
            raise IntegrityAlert(f"settle verification failed: {exc}") from exc
        st.settling = True
        self.save()
        return result

    def dispute(self, m: int, accused: int | None = None) -> dict[int, str]:
        """Ask the server to reveal the accused's cells of round m and judge them.

        Returns a verdict per target: 'framed' (pure mask), 'charged', or
        'tampered'; 'unavailable' when the round's cells were already pruned.
        """
        self.catch_up()
        st = self.state
        accused = st.index if accused is None else accused
        meta = st.round_meta.get(m)
        if meta is None:
            raise SdkError(f"round {m} unknown; catch up first")
        verdicts: dict[int, str] = {}
        for j in meta.roster:
            r = self._post(
                f"/rounds/{m}/reveal", {"accused": accused, "target": j}
            )
            if r.status_code == 410:
                verdicts[j] = "unavailable"
                continue
            _expect(r, 200)
            entry = wire.decode_word(r.json()["entry"])
            verdicts[j] = protocol.verify_innocence(st, m, accused, j, entry)
        return verdicts

    def leave(self) -> int:
        """Leave the group: requires a zero balance, rides one final round."""
        self.catch_up()
        st = self.state
        if st.balance_cents != 0:
            raise SdkError(
                f"balance is {st.balance_cents} cents; settle up before leaving"
            )
        r = self._post("/leave", {"attested_zero": True})
        _expect(r, 200)
        leave_round = r.json()["leave_round"]
        while st.next_round < leave_round:
            self.step()
        self.save()
        return leave_round

    def status(self) -> dict:
        self.catch_up()
        st = self.state
        return {
            "group_id": self.group_id,
            "index": st.index,
            "mode": st.mode.value,
            "schedule": st.schedule.kind.value,
            "next_round": st.next_round,
            "balance_cents": st.balance_cents,
            "roster": list(st.roster()),
            "phase": st.phase.value,
            "settling": st.settling,
            "review": self.review,
        }


def _expect(r: httpx.Response, code: int) -> None:
    if r.status_code != code:
        try:
            detail = r.json().get("detail", r.text)
        except ValueError:
            detail = r.text
        raise SdkError(f"{r.request.method} {r.request.url.path}: {r.status_code} {detail}")
