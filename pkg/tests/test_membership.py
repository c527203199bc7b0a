import pytest
from dataclasses import replace

from paysplit import client as cl, server as sv
from paysplit.config import Mode
from paysplit.schedule import unit_schedule
from paysplit.sim import InProcessGroup

KEY = bytes.fromhex("f0e1d2c3b4a5968778695a4b3c2d1e0f")


@pytest.mark.parametrize("mode", list(Mode))
def test_join_mid_life_and_settle(mode):
    g = InProcessGroup(4, mode, unit_schedule(), key=KEY)
    # history the joiner never sees, including an offline round
    g.run_round({1: cl.RoundIntent.charge(2)})
    g.run_round({3: cl.RoundIntent.charge(1)})
    g.run_round({2: cl.RoundIntent.charge(4)}, offline=[3])
    g.run_round()

    idx = g.join_member()
    assert idx == 5
    report = g.run_round({4: cl.RoundIntent.charge(1)})  # the event round
    assert report.record.events == ("join:5",)
    assert 5 in g.clients  # sponsor handed over a drift snapshot
    assert g.clients[5].next_round == g.server.next_round
    assert g.clients[5].drift == g.clients[1].drift

    g.run_round({2: cl.RoundIntent.charge(5)})
    g.run_round({5: cl.RoundIntent.charge(3)})
    assert g.settle() == {1: 1, 2: -1, 3: 0, 4: 0, 5: 0}


@pytest.mark.parametrize("mode", list(Mode))
def test_leave_rides_final_round(mode):
    g = InProcessGroup(4, mode, unit_schedule(), key=KEY)
    g.run_round({1: cl.RoundIntent.charge(2)})
    g.run_round({2: cl.RoundIntent.charge(1)})  # member 2 back to zero
    g.leave_member(2)
    report = g.run_round({3: cl.RoundIntent.charge(4)})  # 2's final round
    assert report.record.events == ("leave:2",)
    assert 2 in report.record.roster
    assert g.server.roster(g.server.next_round) == (1, 3, 4)
    g.run_round({4: cl.RoundIntent.charge(1)})
    assert g.settle() == {1: 1, 3: -1, 4: 0}


@pytest.mark.parametrize("mode", list(Mode))
def test_join_then_leave(mode):
    g = InProcessGroup(3, mode, unit_schedule(), key=KEY)
    g.run_round({1: cl.RoundIntent.charge(3)})
    idx = g.join_member()
    g.run_round()
    g.run_round({idx: cl.RoundIntent.charge(1)})
    g.run_round({1: cl.RoundIntent.charge(idx)})  # joiner back to zero
    g.leave_member(idx)
    g.run_round()
    assert g.settle() == {1: -1, 2: 0, 3: 1}


def test_leave_with_debt_refused():
    g = InProcessGroup(3, Mode.SEMIHONEST, unit_schedule(), key=KEY)
    g.run_round({1: cl.RoundIntent.charge(2)})
    with pytest.raises(sv.ServerError, match="zero-balance"):
        g.leave_member(2)


def test_sponsor_must_be_settled_and_quiet():
    g = InProcessGroup(3, Mode.SEMIHONEST, unit_schedule(), key=KEY)
    g.run_round({1: cl.RoundIntent.charge(2), 3: cl.RoundIntent.charge(2)})
    sponsor = g.clients[1]
    assert sponsor.in_resolution
    with pytest.raises(cl.ProtocolError, match="resolution or settle"):
        cl.join_client(g.secret, 9, g.mode, g.sched, sponsor)


def test_join_not_yet_announced_is_refused():
    g = InProcessGroup(3, Mode.SEMIHONEST, unit_schedule(), key=KEY)
    with pytest.raises(cl.ProtocolError, match="not announced"):
        cl.join_client(g.secret, 4, g.mode, g.sched, g.clients[1])


def test_burned_round_still_applies_its_membership_events():
    g = InProcessGroup(3, Mode.SEMIHONEST, unit_schedule(), key=KEY)
    g.run_round()
    g.join_member()
    # the join event rides a round whose digest reaches member 2 corrupted;
    # the round gets rolled back, but the join still happened on the server
    def corrupt(i, digest):
        if i == 2:
            return replace(digest, v_prime=digest.v_prime ^ 1)
        return digest

    report = g.run_round(digest_mutator=corrupt)
    assert 2 in report.failures
    report = g.run_round()  # carries rollback:1, burns round 1 everywhere
    assert "rollback:1" in report.record.events
    assert not report.failures
    for i in (1, 2, 3):
        assert g.clients[i].round_meta[1].kind == "burned"
        assert 4 in g.clients[i].members
    g.run_round({4: cl.RoundIntent.charge(2)})
    assert g.settle() == {1: 0, 2: 1, 3: 0, 4: -1}


@pytest.mark.parametrize("mode", list(Mode))
def test_two_joiners_back_to_back(mode):
    g = InProcessGroup(2, mode, unit_schedule(), key=KEY)
    g.join_member()
    g.run_round()
    g.join_member()
    g.run_round({3: cl.RoundIntent.charge(1)})
    g.run_round({4: cl.RoundIntent.charge(3)})
    assert g.settle() == {1: 1, 2: 0, 3: 0, 4: -1}
