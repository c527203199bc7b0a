import json

from paysplit.config import Mode
from paysplit.schedule import packed_schedule, powers_schedule, unit_schedule
from paysplit.sim import Scenario, random_scenario, run_scenario
from paysplit.sim.scenario import RoundScript


def test_fixed_scenario_all_schedules_and_modes():
    cases = [
        (unit_schedule(), Mode.SEMIHONEST),
        (unit_schedule(), Mode.MALICIOUS),
        (powers_schedule(), Mode.SEMIHONEST),
        (powers_schedule(), Mode.MALICIOUS),
        (packed_schedule(), Mode.SEMIHONEST),
    ]
    for sched, mode in cases:
        if sched.kind.value == "packed":
            rounds = (
                RoundScript(lane_charges=((1, 0, 2), (1, 3, 3))),
                RoundScript(),
                RoundScript(lane_charges=((3, 1, 1),)),
            )
        else:
            rounds = (
                RoundScript(charges=((1, 2),)),
                RoundScript(offline=(3,)),
                RoundScript(charges=((3, 1),)),
            )
        sc = Scenario("fixed", 4, mode, sched, rounds)
        report = run_scenario(sc)
        assert report.ok, (mode, sched.kind, report.settled, report.oracle)
        assert sum(report.settled.values()) == 0


def test_collision_scenario_settles_to_oracle():
    sc = Scenario(
        "collide",
        5,
        Mode.MALICIOUS,
        unit_schedule(),
        (
            RoundScript(charges=((1, 4), (2, 4))),
            RoundScript(),
            RoundScript(),
            RoundScript(),
            RoundScript(),
            RoundScript(charges=((4, 1),)),
        ),
    )
    report = run_scenario(sc)
    assert report.ok
    assert report.collisions == 1
    assert report.settled == {1: 0, 2: -1, 3: 0, 4: 1, 5: 0}


def test_membership_churn_scenario():
    sc = Scenario(
        "churn",
        3,
        Mode.SEMIHONEST,
        unit_schedule(),
        (
            RoundScript(charges=((1, 2),)),
            RoundScript(join=1),
            RoundScript(),
            RoundScript(charges=((4, 2),)),
            RoundScript(charges=((2, 1),)),
            RoundScript(charges=((2, 4),)),
            RoundScript(leave=(4,)),
            RoundScript(),
        ),
    )
    report = run_scenario(sc)
    assert report.ok
    assert set(report.settled) == {1, 2, 3}


def test_scenario_json_round_trip():
    sc = random_scenario(42)
    blob = json.dumps(sc.to_json())
    back = Scenario.from_json(json.loads(blob))
    assert back == sc


def test_random_scenarios_deterministic():
    assert random_scenario(7).to_json() == random_scenario(7).to_json()
    assert random_scenario(7).to_json() != random_scenario(8).to_json()


def test_seeded_scenario_batch():
    # a fast sample; the acceptance suite runs the thousand-scenario sweep
    for seed in range(120):
        sc = random_scenario(seed)
        report = run_scenario(sc)
        assert report.ok, (seed, report.settled, report.oracle)
        assert sum(report.settled.values()) == 0
