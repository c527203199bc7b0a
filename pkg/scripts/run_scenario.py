#!/usr/bin/env python3
"""Run declarative scenario files, or seeded random ones, against the oracle.

A scenario file is a JSON object:

    {
      "name": "...",
      "n": 4,                       initial member count
      "mode": "semihonest" | "malicious",
      "schedule": {"kind": "unit" | "cycle" | "packed",
                   "cycle": [1, 2, 4, ...],     round values (cycle kind)
                   "windows": 3},               packed window count
      "rounds": [
        {"charges": [[charger, target], ...],        one unit each
         "lane_charges": [[charger, lane, target]],  packed schedules only
         "offline": [index, ...],
         "join": 0,                                  members to add
         "leave": [index, ...]},                     must owe nothing
        ...
      ]
    }

Every field of a round is optional; an empty object is a quiet round. The
runner defers scripted rounds while a collision is still resolving, settles
at the end, and fails loudly if the result disagrees with the plaintext
ledger oracle. See scripts/dinner_scenario.json for a worked example.

Examples:
    python scripts/run_scenario.py scripts/dinner_scenario.json
    python scripts/run_scenario.py --seed 42 --count 25
"""

import argparse
import sys

from paysplit.sim.scenario import Scenario, random_scenario, run_scenario


def show(report) -> None:
    verdict = "matches oracle" if report.ok else f"DIVERGES from {report.oracle}"
    print(
        f"{report.name}: {report.rounds_run} rounds, "
        f"{report.collisions} collision(s), settled {report.settled} ({verdict})"
    )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("files", nargs="*", help="scenario JSON files to run")
    ap.add_argument("--seed", type=int, default=None,
                    help="run seeded random scenarios instead of files")
    ap.add_argument("--count", type=int, default=1,
                    help="how many consecutive seeds to run")
    args = ap.parse_args()

    if not args.files and args.seed is None:
        ap.error("give scenario files or --seed")

    scenarios = [Scenario.load(path) for path in args.files]
    if args.seed is not None:
        scenarios.extend(random_scenario(args.seed + k) for k in range(args.count))

    bad = 0
    for sc in scenarios:
        try:
            report = run_scenario(sc)
        except AssertionError as err:
            print(f"{sc.name}: FAILED ({err})")
            bad += 1
            continue
        show(report)
        bad += 0 if report.ok else 1
    sys.exit(1 if bad else 0)


if __name__ == "__main__":
    main()
