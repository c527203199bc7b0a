"""Acceptance gate: one test per headline guarantee, tolerances pinned.

Every promise the package makes gets exactly one pass/fail line here, in
order: round counts, bandwidth, the thousand-scenario oracle sweep,
collision overhead, cheater detection, server-corruption detection, the
crypto-free fast server, client round cost, and crash recovery.  The
supporting machinery lives in paysplit.sim; this module only asserts.

The two thousand-trial sweeps dominate the runtime (a few minutes total);
everything else finishes in seconds.
"""

import asyncio

import httpx

from paysplit import client as cl
from paysplit import masks, ring, server as sv, wire
from paysplit.config import GroupConfig, Mode
from paysplit.masks import GroupSecret
from paysplit.planner import rounds_for_amount
from paysplit.schedule import packed_schedule, powers_schedule, unit_schedule
from paysplit.server import Status
from paysplit.service.http import create_app
from paysplit.sim import InProcessGroup, LedgerOracle, random_scenario, run_scenario
from paysplit.sim.adversary import (
    cheat_double_unit,
    frame_member,
    run_cheat_trial,
    run_corruption_trial,
    sweep,
)
from paysplit.sim.bench import bandwidth_bytes, bench_client, bench_server, fit_exponent


# Round counts for one transfer of the given amount (cents), per schedule:
# one unit per round, the default powers-of-two cycle, and six-lane packing.
ROUND_COUNTS = {
    100: (100, 7, 2),
    1_000: (1_000, 10, 2),
    10_000: (10_000, 14, 3),
    20_000: (20_000, 15, 3),
    40_000: (40_000, 16, 3),
    60_000: (60_000, 16, 3),
    80_000: (80_000, 17, 3),
    100_000: (100_000, 17, 3),
}


def test_round_count_table_is_exact():
    unit, powers, packed = unit_schedule(), powers_schedule(), packed_schedule()
    for cents, (naive, cycled, stacked) in ROUND_COUNTS.items():
        assert rounds_for_amount(cents, unit) == naive
        assert rounds_for_amount(cents, powers) == cycled, f"{cents} cents"
        assert rounds_for_amount(cents, packed) == stacked, f"{cents} cents"


def test_per_round_bandwidth_is_bit_exact():
    secret = GroupSecret(bytes(range(16)))
    for n, upstream in ((10, 160), (25, 400), (100, 1600)):
        assert bandwidth_bytes(n) == (upstream, 52)
        # measure the real encodings, not just the formula
        st = cl.setup_client(secret, 1, n, Mode.MALICIOUS, unit_schedule())
        vec = cl.build_round_vector(st, cl.RoundIntent.idle())
        assert len(wire.encode_submission(vec)) == upstream
        server = sv.server_setup("bw", n, cl.setup_constant(secret, Mode.MALICIOUS))
        rec = sv.process_round(server, {1: vec})
        core = wire.DigestCore(rec.v_prime, rec.c, server.balances[1], rec.status)
        assert len(wire.encode_digest_core(core)) == 52


def test_thousand_seeded_honest_scenarios_settle_to_oracle():
    for seed in range(1000):
        report = run_scenario(random_scenario(seed))
        assert report.ok, f"seed {seed}: {report.settled} != {report.oracle}"
        assert sum(report.settled.values()) == 0, f"seed {seed}: nonzero sum"


def test_two_way_collision_overhead_is_exact():
    for mode, extra in ((Mode.SEMIHONEST, 2), (Mode.MALICIOUS, 3)):
        g = InProcessGroup(4, mode, unit_schedule())
        oracle = LedgerOracle(range(1, 5))
        report = g.run_round(
            {1: cl.RoundIntent.charge(3), 2: cl.RoundIntent.charge(4)}
        )
        assert all(
            o.kind is cl.OutcomeKind.COLLISION for o in report.outcomes.values()
        )
        oracle.apply(1, 3, 1)
        oracle.apply(2, 4, 1)
        g.run_until_quiet()
        # two transfers landed, plus exactly `extra` resolution rounds
        assert g.server.next_round == 2 + extra, mode
        assert g.settle() == oracle.snapshot(), mode


def test_cheating_members_never_escape_detection():
    # the seeded sweep covers doubled units, sum-preserving redirects,
    # garbage vectors and untagged units, across modes and group sizes
    trials = sweep(run_cheat_trial, 400)
    missed = [t for t in trials if not t.detected]
    assert missed == [], f"undetected cheats: {missed[:5]}"

    # the published per-submitter sums name exactly the cheating index
    for mode in Mode:
        g = InProcessGroup(4, mode, unit_schedule())
        report = g.run_round(
            {2: cl.RoundIntent.charge(3)},
            vector_mutators={2: cheat_double_unit(g, 3)},
            auto_report=False,
        )
        sums = sv.emit_misbehavior_sums(g.server, report.round_no)
        for honest in (1, 3, 4):
            named = cl.verify_misbehavior_sums(g.clients[honest], report.round_no, sums)
            assert named == [2], (mode, honest, named)

    # a framed member always raises the alarm, and the reveal clears them
    for mode in Mode:
        g = InProcessGroup(4, mode, unit_schedule())
        report = g.run_round(digest_mutator=frame_member(g, framed=2), auto_report=False)
        assert report.outcomes[2].kind is cl.OutcomeKind.FRAMED, mode
        req = cl.prove_innocence_request(g.clients[2], 0, target=3)
        revealed = sv.reveal_entry(g.server, req["round"], req["accused"], req["target"])
        assert cl.verify_innocence(g.clients[3], 0, 2, 3, revealed) == "framed"

    # a false settle claim cannot move the result in malicious mode
    g = InProcessGroup(3, Mode.MALICIOUS, unit_schedule())
    g.run_round({1: cl.RoundIntent.charge(2)})
    balances = sv.settle_broadcast(g.server)
    settle_round = g.server.next_round
    claims = {i: cl.settle_prepare(g.clients[i], settle_round) for i in (1, 2, 3)}
    claims[2] = ring.add(claims[2], 5)  # member 2 understates their debt
    try:
        cl.settle(g.clients[1], settle_round, balances, claims)
    except cl.ProtocolError as err:
        assert "member 2" in str(err)
    else:
        raise AssertionError("false settle claim went unnoticed")


def test_thousand_server_corruptions_all_detected():
    trials = sweep(lambda s: run_corruption_trial(s, mode=Mode.MALICIOUS), 1000)
    assert len(trials) == 1000
    missed = [t for t in trials if not t.detected]
    assert missed == [], f"undetected corruptions: {missed[:5]}"


def test_server_is_crypto_free_and_fast():
    # zero block-cipher calls anywhere in the server's round path
    g = InProcessGroup(5, Mode.MALICIOUS, unit_schedule())
    for intents in ({}, {2: cl.RoundIntent.charge(4)}, {}):
        m = g.server.next_round
        roster = g.server.roster(m)
        subs = {
            i: cl.build_round_vector(g.clients[i], intents.get(i, cl.RoundIntent.idle()))
            for i in roster
        }
        before = masks.prf_block_count()
        record = sv.process_round(g.server, subs)
        assert masks.prf_block_count() == before, "server invoked the PRF"
        for i in roster:
            cl.process_round_digest(
                g.clients[i],
                cl.RoundDigest(
                    round_no=record.round_no,
                    v_prime=record.v_prime,
                    c=record.c,
                    b_entry=g.server.balances[i],
                    status=record.status,
                    offline=record.offline,
                    events=record.events,
                ),
            )
    before = masks.prf_block_count()
    sv.settle_broadcast(g.server)
    assert masks.prf_block_count() == before, "settle broadcast invoked the PRF"

    # under a millisecond per round at 25 members
    point = bench_server(ns=(25,), rounds=200)[0]
    assert point.mean_us < 1000.0, f"{point.mean_us:.1f} us per round"

    # near-linear scaling in the group size
    exponent = fit_exponent(bench_server(rounds=50))
    assert 1.0 <= exponent <= 2.5, f"scaling exponent {exponent:.2f}"


def test_client_round_cost_stays_in_budget():
    points = {p.mode: p for p in bench_client(n=25, rounds=40)}
    semi = points[Mode.SEMIHONEST].mean_ms
    mal = points[Mode.MALICIOUS].mean_ms
    assert semi < 50.0, f"semihonest round took {semi:.2f} ms"
    assert mal < 50.0, f"malicious round took {mal:.2f} ms"
    assert mal / semi - 1.0 < 0.25, f"malicious overhead {mal / semi - 1.0:+.0%}"


SCRIPT = [(1, 2), (2, 3), (3, 1), (1, 3), (2, 1), (3, 2)]  # (charger, target)


def _fresh_http(storage) -> httpx.AsyncClient:
    transport = httpx.ASGITransport(app=create_app(storage))
    return httpx.AsyncClient(transport=transport, base_url="http://svc")


def _digest_from_json(body: dict) -> cl.RoundDigest:
    core = wire.decode_digest_core(wire.b64d(body["digest"]))
    return cl.RoundDigest(
        round_no=body["round"],
        v_prime=core.v_prime,
        c=core.c,
        b_entry=core.b_entry,
        status=Status(core.status),
        offline=tuple(body["offline"]),
        events=tuple(body["events"]),
        rolled_back=body["rolled_back"],
    )


async def _scripted_run(storage, restart_after: int | None):
    """Drive SCRIPT over the wire service, restarting the server process
    after `restart_after` completed rounds (None = never), then settle."""
    secret = GroupSecret(bytes.fromhex("0f1e2d3c4b5a69788796a5b4c3d2e1f0"))
    cfg = GroupConfig(
        n=3, mode=Mode.SEMIHONEST, schedule=unit_schedule(), round_period_ms=60_000
    )
    http = _fresh_http(storage)
    try:
        r = await http.post(
            "/groups",
            json={
                "config": cfg.to_json(),
                "a": wire.encode_word(cl.setup_constant(secret, cfg.mode)),
            },
        )
        gid, join_secret = r.json()["group_id"], r.json()["join_secret"]
        headers, states = {}, {}
        for _ in range(cfg.n):
            r = await http.post(f"/groups/{gid}/join", json={"join_secret": join_secret})
            i = r.json()["index"]
            headers[i] = {"Authorization": f"Bearer {r.json()['token']}"}
            states[i] = cl.setup_client(secret, i, cfg.n, cfg.mode, cfg.schedule)

        for k, (charger, target) in enumerate(SCRIPT):
            if restart_after == k:
                await http.aclose()
                http = _fresh_http(storage)
            m = states[1].next_round
            for i, st in states.items():
                intent = (
                    cl.RoundIntent.charge(target) if i == charger else cl.RoundIntent.idle()
                )
                vec = cl.build_round_vector(st, intent)
                r = await http.post(
                    f"/groups/{gid}/rounds/{m}/submission",
                    json={"vector": wire.b64e(wire.encode_submission(vec))},
                    headers=headers[i],
                )
                assert r.status_code == 200, r.text
            for i, st in states.items():
                r = await http.get(
                    f"/groups/{gid}/rounds/{m}/digest", headers=headers[i]
                )
                out = cl.process_round_digest(st, _digest_from_json(r.json()))
                assert out.kind is not cl.OutcomeKind.INTEGRITY_FAILURE, out

        if restart_after == len(SCRIPT):
            await http.aclose()
            http = _fresh_http(storage)
        r = await http.post(f"/groups/{gid}/settle", headers=headers[1])
        assert r.status_code == 200, r.text
        settle_round = r.json()["settle_round"]
        raw = r.json()["balances"]
        balances = {int(k): wire.decode_word(v) for k, v in raw.items()}
        settled = [
            cl.settle(st, settle_round, balances, None) for st in states.values()
        ]
        assert all(s == settled[0] for s in settled)
        return settle_round, raw, settled[0]
    finally:
        await http.aclose()


def test_restart_at_every_round_boundary_keeps_settlement(tmp_path):
    baseline = asyncio.run(_scripted_run(tmp_path / "base", None))
    assert baseline[2] == {1: 0, 2: 0, 3: 0}  # the script is a closed cycle twice
    for cut in range(len(SCRIPT) + 1):
        out = asyncio.run(_scripted_run(tmp_path / f"cut{cut}", cut))
        assert out == baseline, f"restart after round {cut} changed the settlement"
