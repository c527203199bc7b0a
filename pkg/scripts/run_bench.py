#!/usr/bin/env python3
"""Measure the round pipeline and write the sweep CSV plus the plots.

Examples:
    python scripts/run_bench.py --outdir bench_out
    python scripts/run_bench.py --ns 10 25 50 --server-rounds 500 --parallel 1 2 4
"""

import argparse

from paysplit.sim.bench import SWEEP_NS, bench, fit_exponent
from paysplit.sim.figures import emit_figures


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ns", type=int, nargs="+", default=list(SWEEP_NS),
                    help="group sizes for the server sweep")
    ap.add_argument("--server-rounds", type=int, default=100)
    ap.add_argument("--client-ns", type=int, nargs="+", default=[10, 25, 50, 100],
                    help="group sizes to also time a client at (both modes)")
    ap.add_argument("--client-rounds", type=int, default=20)
    ap.add_argument("--parallel", type=int, nargs="*", default=[],
                    help="also run this many independent groups at once, "
                         "one process each (e.g. --parallel 1 2 4)")
    ap.add_argument("--outdir", default="bench_out")
    args = ap.parse_args()

    report = bench(
        ns=tuple(args.ns),
        server_rounds=args.server_rounds,
        client_ns=tuple(args.client_ns),
        client_rounds=args.client_rounds,
        parallel_groups=tuple(args.parallel),
    )

    print(f"{'N':>4} {'server µs':>10} {'client ms (semi)':>17} "
          f"{'client ms (mal)':>16} {'up B':>6} {'down B':>7}")
    for row in report.rows():
        semi = "-" if row["client_ms_semihonest"] is None else f"{row['client_ms_semihonest']:.3f}"
        mal = "-" if row["client_ms_malicious"] is None else f"{row['client_ms_malicious']:.3f}"
        print(f"{row['N']:>4} {row['server_us']:>10.1f} {semi:>17} "
              f"{mal:>16} {row['bytes_up']:>6} {row['bytes_down']:>7}")
    print(f"server scaling exponent over N: {fit_exponent(report.server):.2f}")

    if report.parallel:
        print("\nindependent groups in parallel (one process each):")
        for p in report.parallel:
            print(f"  {p.groups} group(s): {p.per_group_us:.0f} µs/round per group, "
                  f"{p.wall_s:.2f} s wall for {p.rounds} rounds each")

    print()
    for path in emit_figures(report, args.outdir):
        print("wrote", path)


if __name__ == "__main__":
    main()
