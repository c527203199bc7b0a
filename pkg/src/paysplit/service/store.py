"""Snapshot + append-only log persistence for hosted groups.

Each group owns a directory with two files:

  snapshot.json   config, membership table, tokens and flags; rewritten
                  whenever any of those change (joins, leaves, reports,
                  settle, rounds that carried events)
  rounds.jsonl    one line per processed round plus rollback markers,
                  append-only

Balances are deliberately not stored anywhere: recovery replays them from
the round log, so a restarted service is bit-identical to one that never
crashed.  Neither file ever contains a plaintext amount or a payer/payee
identity; every value word was masked client-side before submission.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .. import server
from ..server import MemberRecord, RoundRecord, ServerGroupState, Status


class StoreError(RuntimeError):
    pass


def record_to_json(rec: RoundRecord) -> dict:
    return {
        "kind": "round",
        "round_no": rec.round_no,
        "value": rec.value,
        "status": int(rec.status),
        "roster": list(rec.roster),
        "offline": list(rec.offline),
        "vec_sum": list(rec.vec_sum),
        "v_prime": rec.v_prime,
        "c": rec.c,
        "member_sums": {str(i): v for i, v in rec.member_sums.items()},
        "events": list(rec.events),
        "announce_sum": rec.announce_sum,
        "cells": (
            None
            if rec.cells is None
            else {str(i): list(v) for i, v in rec.cells.items()}
        ),
    }


def record_from_json(data: dict) -> RoundRecord:
    return RoundRecord(
        round_no=int(data["round_no"]),
        value=int(data["value"]),
        status=Status(int(data["status"])),
        roster=tuple(data["roster"]),
        offline=tuple(data["offline"]),
        vec_sum=tuple(int(x) for x in data["vec_sum"]),
        v_prime=int(data["v_prime"]),
        c=int(data["c"]),
        member_sums={int(k): int(v) for k, v in data["member_sums"].items()},
        events=tuple(data["events"]),
        announce_sum=(
            None if data.get("announce_sum") is None else int(data["announce_sum"])
        ),
        cells=(
            None
            if data.get("cells") is None
            else {int(k): tuple(int(x) for x in v) for k, v in data["cells"].items()}
        ),
    )


class GroupStore:
    def __init__(self, root: Path | str, group_id: str):
        self.dir = Path(root) / group_id

    @property
    def snapshot_path(self) -> Path:
        return self.dir / "snapshot.json"

    @property
    def log_path(self) -> Path:
        return self.dir / "rounds.jsonl"

    def exists(self) -> bool:
        return self.snapshot_path.is_file()

    def create(self) -> None:
        self.dir.mkdir(parents=True, exist_ok=False)

    def save_snapshot(self, snap: dict) -> None:
        # Write-then-rename so a crash mid-write cannot corrupt the snapshot.
        tmp = self.snapshot_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(snap, indent=1))
        os.replace(tmp, self.snapshot_path)

    def append(self, entry: dict) -> None:
        with open(self.log_path, "a") as fh:
            fh.write(json.dumps(entry) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def load_snapshot(self) -> dict:
        if not self.exists():
            raise StoreError(f"no snapshot for group at {self.dir}")
        return json.loads(self.snapshot_path.read_text())

    def load_log(self) -> list[dict]:
        if not self.log_path.is_file():
            return []
        lines = []
        for raw in self.log_path.read_text().splitlines():
            raw = raw.strip()
            if raw:
                lines.append(json.loads(raw))
        return lines

    @staticmethod
    def list_groups(root: Path | str) -> list[str]:
        root = Path(root)
        if not root.is_dir():
            return []
        return sorted(
            p.name for p in root.iterdir() if (p / "snapshot.json").is_file()
        )


def rebuild_state(snap: dict, lines: list[dict]) -> ServerGroupState:
    """Reconstruct a group's server state from its files.

    The snapshot carries the membership table and flags; every balance is
    replayed from the round log, rollback markers included.
    """
    state = ServerGroupState(group_id=snap["group_id"], a=int(snap["a"]))
    for key, mem in snap["members"].items():
        idx = int(key)
        state.members[idx] = MemberRecord(
            index=idx,
            join_round=int(mem["join_round"]),
            leave_round=(
                None if mem["leave_round"] is None else int(mem["leave_round"])
            ),
        )
    state.next_index = int(snap["next_index"])
    state.pending_events = list(snap["pending_events"])
    state.settling = bool(snap["settling"])

    for line in lines:
        kind = line.get("kind")
        if kind == "round":
            state.log.append(record_from_json(line))
        elif kind == "rollback":
            rec = state.record(int(line["round_no"]))
            rec.rolled_back = True
            rec.cells = None
        elif kind == "settle":
            state.settling = True
        else:
            raise StoreError(f"unknown log entry kind {kind!r}")

    state.next_round = state.log[-1].round_no + 1 if state.log else 0
    initial = [i for i, mr in state.members.items() if mr.join_round == 0]
    state.balances = server.replay_balances(state.log, state.a, initial)
    # Members admitted but whose join event has not ridden a round yet only
    # exist in the snapshot; give them their zero entry back.
    for idx, mr in state.members.items():
        live = mr.leave_round is None or mr.leave_round > state.next_round
        if live and idx not in state.balances:
            state.balances[idx] = 0
    return state
