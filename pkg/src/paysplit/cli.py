"""Command line over the member session: one state file per membership."""

from __future__ import annotations

import base64
import json as jsonlib
import sys
from pathlib import Path

import click
import httpx

from .client import ProtocolError
from .config import GroupConfig, Mode
from .schedule import packed_schedule, powers_schedule, unit_schedule
from .sdk import ClientConfig, IntegrityAlert, MemberSession, SdkError

SCHEDULES = {
    "unit": unit_schedule,
    "powers": powers_schedule,
    "packed": packed_schedule,
}


def _fail(message: str, code: int = 1) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _alert(message: str) -> None:
    click.echo("=" * 60, err=True)
    click.echo(f"INTEGRITY ALERT: {message}", err=True)
    click.echo("the round was aborted; no balance went through", err=True)
    click.echo("=" * 60, err=True)
    sys.exit(3)


def _guarded(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except IntegrityAlert as exc:
        _alert(str(exc))
    except ProtocolError as exc:
        _alert(str(exc))
    except SdkError as exc:
        _fail(str(exc))
    except httpx.TransportError as exc:
        _fail(f"cannot reach the service ({exc}); check --server and retry", 2)


def _session(state_path: str) -> MemberSession:
    raw = jsonlib.loads(Path(state_path).read_text())
    return MemberSession(ClientConfig(server=raw["server"], state_path=Path(state_path)))


def _emit(data: dict, as_json: bool) -> None:
    if as_json:
        click.echo(jsonlib.dumps(data, indent=1))
        return
    for k, v in data.items():
        click.echo(f"{k}: {v}")


@click.group()
def main() -> None:
    """Split payments without telling the server who pays whom, or how much."""


@main.command("create-group")
@click.option("--server", required=True, help="Service base URL.")
@click.option("--state", "state_path", required=True, type=click.Path(), help="Where to keep this member's state file.")
@click.option("--members", "n", required=True, type=int, help="Initial group size.")
@click.option("--mode", type=click.Choice(["semihonest", "malicious"]), default="semihonest", show_default=True)
@click.option("--schedule", "sched", type=click.Choice(sorted(SCHEDULES)), default="powers", show_default=True)
@click.option("--period-ms", default=1000, show_default=True, type=int)
@click.option("--announce/--no-announce", default=False, help="Enable the masked amount-announcement channel.")
@click.option("--on-demand/--continuous", "on_demand", default=True, show_default=True, help="Run rounds only when someone submits.")
@click.option("--json", "as_json", is_flag=True)
def create_group(server, state_path, n, mode, sched, period_ms, announce, on_demand, as_json):
    """Create a group and claim its first member slot."""
    cfg = GroupConfig(
        n=n,
        mode=Mode(mode),
        schedule=SCHEDULES[sched](),
        round_period_ms=period_ms,
        announcements=announce,
        on_demand_rounds=on_demand,
    )
    session = _guarded(
        MemberSession.create_group, ClientConfig(server, Path(state_path)), cfg
    )
    key = base64.urlsafe_b64encode(session.state.secret.key).decode().rstrip("=")
    _emit(
        {
            "group_id": session.group_id,
            "join_secret": session.join_secret,
            "key": key,
            "index": session.state.index,
            "share": "hand group_id, join_secret and key to the other members over a private channel",
        },
        as_json,
    )


@main.command()
@click.option("--server", default=None, help="Service base URL (not needed with --bundle).")
@click.option("--state", "state_path", required=True, type=click.Path())
@click.option("--group", "group_id", default=None)
@click.option("--join-secret", default=None)
@click.option("--key", "key_b64", default=None, help="Group key (base64url), from the creator.")
@click.option("--bundle", "bundle_path", default=None, type=click.Path(exists=True), help="Invite bundle from an existing member (for groups already running).")
@click.option("--json", "as_json", is_flag=True)
def join(server, state_path, group_id, join_secret, key_b64, bundle_path, as_json):
    """Join a group: fresh slot with --key, or mid-life with --bundle."""
    if bundle_path:
        bundle = jsonlib.loads(Path(bundle_path).read_text())
        session = _guarded(
            MemberSession.from_bundle,
            ClientConfig(bundle["server"], Path(state_path)),
            bundle,
        )
    else:
        if not (server and group_id and join_secret and key_b64):
            _fail("need --server, --group, --join-secret and --key (or --bundle)")
        key = base64.urlsafe_b64decode(key_b64 + "==")
        session = _guarded(
            MemberSession.join_group,
            ClientConfig(server, Path(state_path)),
            group_id,
            join_secret,
            key,
        )
    _emit({"group_id": session.group_id, "index": session.state.index}, as_json)


@main.command()
@click.option("--state", "state_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(), help="Where to write the newcomer's bundle.")
def invite(state_path, out_path):
    """Add a member and export their bootstrap bundle (waits one round)."""
    session = _session(state_path)
    bundle = _guarded(session.invite)
    Path(out_path).write_text(jsonlib.dumps(bundle, indent=1))
    click.echo(f"member {bundle['index']} added; bundle written to {out_path}")
    click.echo("hand the bundle to the newcomer over a private channel")


@main.command()
@click.option("--state", "state_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
def status(state_path, as_json):
    """Balance, roster, phase and charges awaiting review."""
    session = _session(state_path)
    info = _guarded(session.status)
    if as_json:
        click.echo(jsonlib.dumps(info, indent=1))
        return
    click.echo(f"group {info['group_id']}  member {info['index']}  ({info['mode']}, {info['schedule']})")
    click.echo(f"round {info['next_round']}  phase {info['phase']}" + ("  SETTLING" if info["settling"] else ""))
    click.echo(f"balance: {info['balance_cents']} cents")
    click.echo(f"roster: {info['roster']}")
    if info["review"]:
        click.echo("incoming charges:")
        for item in info["review"]:
            who = f"member {item['charger']}" if item["charger"] else "unknown"
            mark = "auto-accepted" if item.get("auto_accepted") else "pending review"
            extra = f" (announced total {item['announced_total']})" if item.get("announced_total") else ""
            click.echo(f"  round {item['round']}: {item['cents']} cents from {who} [{mark}]{extra}")


@main.command()
@click.option("--state", "state_path", required=True, type=click.Path(exists=True))
@click.option("--to", "target", required=True, type=int)
@click.option("--cents", required=True, type=int)
@click.option("--json", "as_json", is_flag=True)
def charge(state_path, target, cents, as_json):
    """Charge a member some cents, spread over the scheduled rounds."""
    session = _session(state_path)
    outcomes = _guarded(session.charge, target, cents)
    summary = {
        "charged_cents": cents,
        "target": target,
        "rounds": [o.round_no for o in outcomes],
        "collisions": sum(o.kind.value == "collision" for o in outcomes),
        "balance_cents": session.state.balance_cents,
    }
    _emit(summary, as_json)


@main.command()
@click.option("--state", "state_path", required=True, type=click.Path(exists=True))
@click.option("--round", "round_no", required=True, type=int)
@click.option("--json", "as_json", is_flag=True)
def reject(state_path, round_no, as_json):
    """Cancel a received charge with an equal counter-charge."""
    session = _session(state_path)
    outcomes = _guarded(session.reject, round_no)
    _emit(
        {
            "rejected_round": round_no,
            "counter_rounds": [o.round_no for o in outcomes],
            "balance_cents": session.state.balance_cents,
        },
        as_json,
    )


@main.command()
@click.option("--state", "state_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
def settle(state_path, as_json):
    """Freeze the group and print everyone's true balance."""
    session = _session(state_path)
    result = _guarded(session.settle)
    if as_json:
        click.echo(jsonlib.dumps({str(k): v for k, v in result.items()}, indent=1))
        return
    for i, cents in sorted(result.items()):
        click.echo(f"member {i}: {cents:+d} cents")


@main.command()
@click.option("--state", "state_path", required=True, type=click.Path(exists=True))
@click.option("--round", "round_no", required=True, type=int)
@click.option("--accused", type=int, default=None, help="Defaults to this member (proving own innocence).")
@click.option("--json", "as_json", is_flag=True)
def dispute(state_path, round_no, accused, as_json):
    """Reveal the accused's raw cells for one round and judge each."""
    session = _session(state_path)
    verdicts = _guarded(session.dispute, round_no, accused)
    if as_json:
        click.echo(jsonlib.dumps({str(k): v for k, v in verdicts.items()}, indent=1))
        return
    for j, verdict in sorted(verdicts.items()):
        click.echo(f"cell toward member {j}: {verdict}")
    if "charged" not in verdicts.values():
        click.echo("no charge in any revealed cell: the accused is innocent (framed)")


@main.command("catch-up")
@click.option("--state", "state_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
def catch_up(state_path, as_json):
    """Replay every round missed while offline."""
    session = _session(state_path)
    outcomes = _guarded(session.catch_up)
    _emit(
        {
            "replayed_rounds": len(outcomes),
            "next_round": session.state.next_round,
            "balance_cents": session.state.balance_cents,
        },
        as_json,
    )


@main.command()
@click.option("--state", "state_path", required=True, type=click.Path(exists=True))
def leave(state_path):
    """Leave the group (requires a zero balance; rides one final round)."""
    session = _session(state_path)
    leave_round = _guarded(session.leave)
    click.echo(f"left the group; last round was {leave_round - 1}")


if __name__ == "__main__":
    main()
