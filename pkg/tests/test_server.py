import pytest

from paysplit import ring, server as sv

MOD = 1 << 128


def fresh(n=3, a=7):
    return sv.server_setup("g", n, a)


def test_setup_bounds():
    with pytest.raises(sv.ServerError):
        sv.server_setup("g", 1, 1)
    with pytest.raises(sv.ServerError):
        sv.server_setup("g", 121, 1)
    st = fresh(4)
    assert st.roster() == (1, 2, 3, 4)
    assert st.balances == {1: 0, 2: 0, 3: 0, 4: 0}
    assert st.next_index == 5


def test_round_math_matches_hand_computation():
    st = fresh(3, a=7)
    w = 3
    subs = {
        1: [10, 20, 30],
        2: [1, 2, 3],
        3: [100, 200, 300],
    }
    rec = sv.process_round(st, subs, value=w)

    cols = [w * (10 + 1 + 100) % MOD, w * (20 + 2 + 200) % MOD, w * (30 + 3 + 300) % MOD]
    assert list(rec.vec_sum) == cols
    assert rec.v_prime == sum(cols) % MOD
    wa = w * 7
    c = ((w * 10 - wa) << 1) + ((w * 2 - wa) << 2) + ((w * 300 - wa) << 3)
    assert rec.c == c % MOD
    assert st.balances == {
        1: (cols[0] - wa) % MOD,
        2: (cols[1] - wa) % MOD,
        3: (cols[2] - wa) % MOD,
    }
    assert rec.member_sums == {1: 60, 2: 6, 3: 600}
    assert rec.status is sv.Status.OK
    assert st.next_round == 1


def test_offline_substitution_freezes_balance():
    st = fresh(3, a=7)
    rec = sv.process_round(st, {1: [7, 0, 0], 3: [0, 0, 7]}, value=2)
    assert rec.offline == (2,)
    assert rec.status is sv.Status.OFFLINE_ROSTER_ATTACHED
    # synthetic vector a*e_2 makes member 2's delta exactly zero
    assert st.balances[2] == 0
    assert rec.cells[2] == (0, 7, 0)
    assert rec.member_sums[2] == 7


def test_missing_submission_refused_without_substitution():
    st = fresh(3)
    with pytest.raises(sv.ServerError):
        sv.process_round(st, {1: [7, 0, 0]}, substitute_offline=False)


def test_bad_submissions_rejected():
    st = fresh(3)
    with pytest.raises(sv.ServerError):
        sv.process_round(st, {9: [0, 0, 0]})
    with pytest.raises(sv.ServerError):
        sv.process_round(st, {1: [0, 0]})
    with pytest.raises(sv.ServerError):
        sv.process_round(st, {1: [0, 0, 0]}, value=0)


def idle_subs(st):
    roster = st.roster()
    out = {}
    for k, i in enumerate(roster):
        vec = [0] * len(roster)
        vec[k] = st.a
        out[i] = vec
    return out


def test_rollback_restores_balances_and_burns_round():
    st = fresh(3, a=1)
    subs = idle_subs(st)
    subs[1] = [1, 1, 0]  # member 1 charges member 2 one unit
    sv.process_round(st, subs)
    assert st.balances == {1: 0, 2: 1, 3: 0}

    sv.rollback_round(st, 0)
    assert st.balances == {1: 0, 2: 0, 3: 0}
    assert st.log[0].rolled_back
    assert st.log[0].cells is None
    assert st.pending_events == ["rollback:0"]

    with pytest.raises(sv.ServerError):
        sv.rollback_round(st, 0)  # already rolled back

    rec = sv.process_round(st, idle_subs(st))
    assert rec.events == ("rollback:0",)
    assert rec.status is sv.Status.INTEGRITY_ROLLBACK
    with pytest.raises(sv.ServerError):
        sv.rollback_round(st, 0)  # no longer the latest round


def test_digest_for_serves_only_roster_and_latest():
    st = fresh(3, a=1)
    sv.process_round(st, idle_subs(st))
    d = sv.digest_for(st, 0, 2)
    assert (d.round_no, d.b_entry, d.status) == (0, 0, sv.Status.OK)
    with pytest.raises(sv.ServerError):
        sv.digest_for(st, 0, 9)
    sv.process_round(st, idle_subs(st))
    with pytest.raises(sv.ServerError):
        sv.digest_for(st, 0, 2)


def test_join_rides_next_round_and_leave_rides_final_round():
    st = fresh(2, a=1)
    idx = sv.add_member(st)
    assert idx == 3
    assert st.members[3].join_round == 1  # event rides round 0, active from 1
    assert st.pending_events == ["join:3"]
    rec = sv.process_round(st, idle_subs(st))
    assert rec.roster == (1, 2)
    assert rec.events == ("join:3",)
    assert rec.status is sv.Status.MEMBERSHIP_CHANGED
    assert st.roster() == (1, 2, 3)

    sv.remove_member(st, 3, attested_zero=True)
    assert st.members[3].leave_round == 2  # still expected in round 1
    rec = sv.process_round(st, idle_subs(st))
    assert rec.roster == (1, 2, 3)
    assert rec.events == ("leave:3",)
    assert 3 not in st.balances
    assert st.roster() == (1, 2)

    with pytest.raises(sv.ServerError):
        sv.remove_member(st, 3, attested_zero=True)
    with pytest.raises(sv.ServerError):
        sv.remove_member(st, 2, attested_zero=False)


def test_replay_balances_reproduces_live_state():
    st = fresh(3, a=5)
    sv.process_round(st, {1: [2, 9, 4], 2: [5, 5, 5], 3: [1, 1, 1]}, value=2)
    sv.add_member(st)
    sv.process_round(st, {1: [5, 0, 0], 2: [0, 5, 0]})  # 3 offline, join event
    sv.process_round(st, {i: [3, 3, 3, 3] for i in (1, 2, 3, 4)}, value=4)
    sv.rollback_round(st, 2)
    sv.remove_member(st, 2, attested_zero=True)
    sv.process_round(st, {i: [1, 2, 3, 4] for i in (1, 2, 3, 4)})
    sv.process_round(st, {i: [0, 0, 0] for i in (1, 3, 4)})

    replayed = sv.replay_balances(st.log, st.a, (1, 2, 3))
    assert replayed == st.balances


def test_reveal_entry_and_misbehavior_sums():
    st = fresh(3, a=1)
    subs = {1: [8, 9, 10], 2: [0, 1, 0], 3: [6, 6, 6]}
    sv.process_round(st, subs)
    assert sv.reveal_entry(st, 0, 1, 3) == 10
    assert sv.reveal_entry(st, 0, 2, 1) == 0
    assert sv.emit_misbehavior_sums(st, 0) == {1: 27, 2: 1, 3: 18}
    with pytest.raises(sv.ServerError):
        sv.reveal_entry(st, 0, 9, 1)
    with pytest.raises(sv.ServerError):
        sv.reveal_entry(st, 0, 1, 9)
    sv.rollback_round(st, 0)
    with pytest.raises(sv.ServerError):
        sv.reveal_entry(st, 0, 1, 3)  # cells dropped with the rollback


def test_old_cells_pruned_after_retention_window():
    st = fresh(2, a=1)
    sv.process_round(st, idle_subs(st))
    st.next_round = sv.CELL_RETENTION_ROUNDS + 5  # fast-forward the horizon
    sv._prune_cells(st)
    assert st.log[0].cells is None
    assert st.log[0].member_sums  # sums stay for misbehavior queries


def test_announce_sum_is_blind_ring_addition():
    st = fresh(2, a=1)
    words = {1: 3, 2: ring.MASK}  # wraps mod 2^128
    rec = sv.process_round(st, idle_subs(st), announcements=words)
    assert rec.announce_sum == 2
    rec = sv.process_round(st, idle_subs(st))
    assert rec.announce_sum is None


def test_settle_broadcast_snapshots_and_flips_state():
    st = fresh(3, a=1)
    subs = idle_subs(st)
    subs[1] = [1, 1, 0]
    sv.process_round(st, subs)
    snap = sv.settle_broadcast(st)
    assert snap == {1: 0, 2: 1, 3: 0}
    assert st.settling
    rec = sv.process_round(st, idle_subs(st))
    assert rec.status is sv.Status.SETTLE_IN_PROGRESS
