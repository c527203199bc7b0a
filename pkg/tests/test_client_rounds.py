import pytest

from paysplit import client as cl, ring, server as sv
from paysplit.config import Mode
from paysplit.masks import GroupSecret
from paysplit.schedule import packed_schedule, powers_schedule, unit_schedule
from paysplit.sim import InProcessGroup

KEY = bytes(range(16))


def test_idle_round_verifies_everywhere():
    for mode in Mode:
        g = InProcessGroup(3, mode, unit_schedule(), key=KEY)
        report = g.run_round()
        assert not report.failures
        assert all(o.kind is cl.OutcomeKind.IDLE for o in report.outcomes.values())
        assert all(o.self_delta_cents == 0 for o in report.outcomes.values())


def test_single_charge_attribution_and_deltas():
    for mode in Mode:
        g = InProcessGroup(4, mode, unit_schedule(), key=KEY)
        report = g.run_round({1: cl.RoundIntent.charge(3)})
        assert not report.failures
        for i, out in report.outcomes.items():
            assert out.kind is cl.OutcomeKind.CHARGED
            assert out.charges == (cl.ChargeEvent(1, 1, to_self=(i == 3)),)
        assert report.outcomes[1].self_delta_cents == -1
        assert report.outcomes[3].self_delta_cents == 1
        assert report.outcomes[2].self_delta_cents == 0
        assert g.clients[1].balance_cents == -1
        assert g.clients[3].balance_cents == 1


def test_powers_schedule_values_flow_into_deltas():
    g = InProcessGroup(3, Mode.MALICIOUS, powers_schedule(), key=KEY)
    g.run_round()  # value 1
    report = g.run_round({2: cl.RoundIntent.charge(1)})  # value 2
    assert report.outcomes[1].self_delta_cents == 2
    assert report.outcomes[1].value == 2
    report = g.run_round({2: cl.RoundIntent.charge(1)})  # value 4
    assert g.clients[1].balance_cents == 6
    assert g.clients[2].balance_cents == -6
    assert g.settle() == {1: 6, 2: -6, 3: 0}


def test_settle_round_trip_both_modes():
    for mode in Mode:
        g = InProcessGroup(3, mode, unit_schedule(), key=KEY)
        for _ in range(3):
            g.run_round({1: cl.RoundIntent.charge(2)})
        g.run_round({3: cl.RoundIntent.charge(1)})
        assert g.settle() == {1: -2, 2: 3, 3: -1}


def test_forged_settle_claim_rejected():
    g = InProcessGroup(3, Mode.MALICIOUS, unit_schedule(), key=KEY)
    g.run_round({1: cl.RoundIntent.charge(2)})
    balances = sv.settle_broadcast(g.server)
    settle_round = g.server.next_round
    claims = {i: cl.settle_prepare(g.clients[i], settle_round) for i in (1, 2, 3)}
    claims[2] = ring.add(claims[2], 5)  # member 2 lies about its balance
    with pytest.raises(cl.ProtocolError, match="claim of member 2"):
        cl.settle(g.clients[1], settle_round, balances, claims)


def test_announcement_channel_carries_totals():
    g = InProcessGroup(3, Mode.SEMIHONEST, unit_schedule(), key=KEY, announcements=True)
    report = g.run_round()
    assert all(o.announced_total is None for o in report.outcomes.values())
    report = g.run_round(
        {1: cl.RoundIntent(target=2, announce_total=8056)}
    )
    assert all(o.announced_total == 8056 for o in report.outcomes.values())


def test_offline_member_catches_up_cleanly():
    g = InProcessGroup(3, Mode.MALICIOUS, unit_schedule(), key=KEY)
    g.run_round({1: cl.RoundIntent.charge(2)}, offline=[2])
    g.run_round({3: cl.RoundIntent.charge(2)}, offline=[2])
    assert g.clients[2].next_round == 0  # has not seen anything yet
    outcomes = cl.catch_up(g.clients[2], g.pending[2])
    g.pending[2] = []
    assert [o.kind for o in outcomes] == [cl.OutcomeKind.CHARGED] * 2
    assert all(o.charges[0].to_self for o in outcomes)
    assert g.clients[2].balance_cents == 2
    assert g.settle() == {1: -1, 2: 2, 3: -1}


def test_packed_round_multi_lane_charges():
    g = InProcessGroup(3, Mode.SEMIHONEST, packed_schedule(), key=KEY)
    report = g.run_round({1: cl.RoundIntent.charge_lanes({0: 2, 2: 3})})
    assert not report.failures
    vals = g.sched.lane_values(0)
    assert report.outcomes[2].self_delta_cents == vals[0]
    assert report.outcomes[3].self_delta_cents == vals[2]
    assert report.outcomes[1].self_delta_cents == -(vals[0] + vals[2])
    lanes = {ev.lane: ev.charger for ev in report.outcomes[2].charges}
    assert lanes == {0: 1, 2: 1}
    # window cycles with the round number
    g.run_round()
    report = g.run_round({2: cl.RoundIntent.charge_lanes({1: 1})})
    assert report.outcomes[1].self_delta_cents == g.sched.lane_values(2)[1]
    assert g.settle() == {
        1: g.sched.lane_values(2)[1] - vals[0] - vals[2],
        2: vals[0] - g.sched.lane_values(2)[1],
        3: vals[2],
    }


def test_bad_charge_targets_rejected():
    g = InProcessGroup(3, Mode.SEMIHONEST, unit_schedule(), key=KEY)
    with pytest.raises(cl.ProtocolError):
        cl.build_round_vector(g.clients[1], cl.RoundIntent.charge(1))
    with pytest.raises(cl.ProtocolError):
        cl.build_round_vector(g.clients[1], cl.RoundIntent.charge(9))
    p = InProcessGroup(3, Mode.SEMIHONEST, packed_schedule(), key=KEY)
    with pytest.raises(cl.ProtocolError):
        cl.build_round_vector(p.clients[1], cl.RoundIntent.charge_lanes({6: 2}))
    with pytest.raises(cl.ProtocolError):
        cl.build_round_vector(p.clients[1], cl.RoundIntent.charge_lanes({0: 1}))


def test_submission_shape_and_tagging():
    secret = GroupSecret(KEY)
    st = cl.setup_client(secret, 1, 3, Mode.MALICIOUS, unit_schedule())
    vec = cl.build_round_vector(st, cl.RoundIntent.charge(2))
    row = secret.round_mask_row(0, 1, (1, 2, 3))
    assert vec[0] == row[1]
    assert vec[1] == ring.add(row[2], secret.s)  # tagged unit rides the target cell
    assert vec[2] == row[3]

    st2 = cl.setup_client(secret, 2, 3, Mode.SEMIHONEST, unit_schedule())
    vec = cl.build_round_vector(st2, cl.RoundIntent.idle())
    row = secret.round_mask_row(0, 2, (1, 2, 3))
    assert vec[1] == ring.add(row[2], 1)  # idle cover sits on the own cell


def test_setup_constant_per_mode():
    secret = GroupSecret(KEY)
    assert cl.setup_constant(secret, Mode.SEMIHONEST) == 1
    a = cl.setup_constant(secret, Mode.MALICIOUS)
    assert a == ring.add(secret.s, secret.u)
    assert cl.verify_setup_constant(secret, Mode.MALICIOUS, a)
    assert not cl.verify_setup_constant(secret, Mode.MALICIOUS, a ^ 1)


def test_digest_for_wrong_round_is_refused():
    g = InProcessGroup(2, Mode.SEMIHONEST, unit_schedule(), key=KEY)
    report = g.run_round()
    digest = cl.RoundDigest(5, 0, 0, 0, report.record.status)
    with pytest.raises(cl.ProtocolError, match="catch up"):
        cl.process_round_digest(g.clients[1], digest)


def test_trace_names_round_charger():
    g = InProcessGroup(3, Mode.MALICIOUS, unit_schedule(), key=KEY)
    g.run_round({2: cl.RoundIntent.charge(3)})
    g.run_round()
    st = g.clients[1]
    assert cl.trace(st, 0) == (cl.ChargeEvent(2, 1, to_self=False),)
    assert cl.trace(st, 1) == ()
    with pytest.raises(cl.ProtocolError):
        cl.trace(st, 7)


def test_old_intents_pruned():
    g = InProcessGroup(2, Mode.SEMIHONEST, unit_schedule(), key=KEY)
    for _ in range(12):
        g.run_round({1: cl.RoundIntent.charge(2)})
    intents = g.clients[1].sent_intents
    assert 0 not in intents and 11 in intents
    assert len(intents) <= 9
