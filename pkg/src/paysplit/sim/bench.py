"""Timing and bandwidth measurements for the round pipeline.

Server rounds are timed against synthetic submissions: the aggregation path
never looks inside a ring word, so random words exercise exactly the same
arithmetic as masked ones. Client rounds are timed end to end on a live
group (vector build plus digest verification for one member). Raw per-round
samples are kept on every point so medians and tail percentiles can be
reported alongside the mean.

Groups are independent of each other by construction; `bench_group_parallelism`
demonstrates that by running several servers in separate processes and showing
the per-group round time staying flat as groups are added.
"""

from __future__ import annotations

import csv
import math
import random
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .. import client as cl
from .. import ring, server as sv
from ..config import Mode
from ..planner import rounds_for_amount
from ..schedule import packed_schedule, powers_schedule, unit_schedule
from .harness import DEFAULT_KEY, InProcessGroup

DIGEST_BYTES = 52  # v' + c + b entry (3 ring words) + 4-byte status
WORD_BYTES = ring.WORD_BYTES

SWEEP_NS = (10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
TABLE_AMOUNTS = (100, 1000, 10000, 20000, 40000, 60000, 80000, 100000)


def _p90(samples: tuple[float, ...]) -> float:
    if len(samples) < 2:
        return samples[0]
    return statistics.quantiles(samples, n=10)[-1]


@dataclass(frozen=True)
class ServerPoint:
    n: int
    rounds: int
    mean_us: float
    samples_us: tuple[float, ...] = ()

    @property
    def median_us(self) -> float:
        return statistics.median(self.samples_us)

    @property
    def p90_us(self) -> float:
        return _p90(self.samples_us)


@dataclass(frozen=True)
class ClientPoint:
    mode: Mode
    n: int
    rounds: int
    mean_ms: float
    samples_ms: tuple[float, ...] = ()

    @property
    def median_ms(self) -> float:
        return statistics.median(self.samples_ms)

    @property
    def p90_ms(self) -> float:
        return _p90(self.samples_ms)


@dataclass(frozen=True)
class ParallelPoint:
    groups: int
    n: int
    rounds: int
    wall_s: float
    per_group_us: float  # mean in-process round time, averaged over groups


@dataclass(frozen=True)
class BenchReport:
    """One full measurement run: group-size sweep, client modes, round
    counts per amount, and (optionally) the many-groups parallel check."""

    server: list[ServerPoint]
    clients: list[ClientPoint]
    round_counts: dict[int, tuple[int, int, int]]
    parallel: list[ParallelPoint] = field(default_factory=list)

    def client_at(self, n: int, mode: Mode) -> ClientPoint | None:
        for p in self.clients:
            if p.n == n and p.mode is mode:
                return p
        return None

    def rows(self) -> list[dict]:
        """One row per swept group size, with client times where measured."""
        out = []
        for sp in self.server:
            up, down = bandwidth_bytes(sp.n)
            semi = self.client_at(sp.n, Mode.SEMIHONEST)
            mal = self.client_at(sp.n, Mode.MALICIOUS)
            out.append(
                {
                    "N": sp.n,
                    "server_us": round(sp.median_us, 2),
                    "client_ms_semihonest": None if semi is None else round(semi.median_ms, 3),
                    "client_ms_malicious": None if mal is None else round(mal.median_ms, 3),
                    "bytes_up": up,
                    "bytes_down": down,
                }
            )
        return out


def bandwidth_bytes(n: int) -> tuple[int, int]:
    """Per member per round: (upstream submission, downstream digest)."""
    return WORD_BYTES * n, DIGEST_BYTES


def bench_server(
    ns: tuple[int, ...] = SWEEP_NS,
    rounds: int = 100,
    seed: int = 7,
) -> list[ServerPoint]:
    rng = random.Random(seed)
    points = []
    for n in ns:
        state = sv.server_setup(f"bench-{n}", n, 1)
        subs = {
            i: [rng.randrange(ring.MOD) for _ in range(n)] for i in range(1, n + 1)
        }
        sv.process_round(state, subs)  # warm-up, excluded
        samples = []
        for _ in range(rounds):
            t0 = time.perf_counter()
            sv.process_round(state, subs)
            samples.append((time.perf_counter() - t0) * 1e6)
        points.append(ServerPoint(n, rounds, sum(samples) / rounds, tuple(samples)))
    return points


def bench_client(
    n: int = 25, rounds: int = 40, modes: tuple[Mode, ...] = (Mode.SEMIHONEST, Mode.MALICIOUS)
) -> list[ClientPoint]:
    """Per-round cost for one member: build the vector, verify the digest."""
    points = []
    for mode in modes:
        g = InProcessGroup(n, mode, unit_schedule(), key=DEFAULT_KEY)
        samples = []
        for _ in range(rounds):
            m = g.server.next_round
            spent = 0.0
            subs = {}
            for i in g.server.roster(m):
                st = g.clients[i]
                intent = cl.RoundIntent.idle()
                if i == 1:
                    t0 = time.perf_counter()
                    subs[i] = cl.build_round_vector(st, intent)
                    spent += time.perf_counter() - t0
                else:
                    subs[i] = cl.build_round_vector(st, intent)
            record = sv.process_round(g.server, subs)
            for i in g.server.roster(m):
                digest = cl.RoundDigest(
                    round_no=record.round_no,
                    v_prime=record.v_prime,
                    c=record.c,
                    b_entry=g.server.balances[i],
                    status=record.status,
                    offline=record.offline,
                    events=record.events,
                )
                if i == 1:
                    t0 = time.perf_counter()
                    cl.process_round_digest(g.clients[i], digest)
                    spent += time.perf_counter() - t0
                else:
                    cl.process_round_digest(g.clients[i], digest)
            samples.append(spent * 1e3)
        points.append(ClientPoint(mode, n, rounds, sum(samples) / rounds, tuple(samples)))
    return points


def _parallel_group_worker(args: tuple[int, int, int]) -> float:
    """Run one group's rounds in this process; return mean round time (µs)."""
    n, rounds, seed = args
    return bench_server(ns=(n,), rounds=rounds, seed=seed)[0].mean_us


def bench_group_parallelism(
    group_counts: tuple[int, ...] = (1, 2, 4),
    n: int = 25,
    rounds: int = 100,
) -> list[ParallelPoint]:
    """Run G independent groups at once, one process each.

    Groups share no state, so the per-group round time should stay flat as
    more groups are added (up to the core count of the machine).
    """
    points = []
    for g in group_counts:
        jobs = [(n, rounds, 100 + k) for k in range(g)]
        t0 = time.perf_counter()
        with ProcessPoolExecutor(max_workers=g) as pool:
            means = list(pool.map(_parallel_group_worker, jobs))
        wall = time.perf_counter() - t0
        points.append(ParallelPoint(g, n, rounds, wall, sum(means) / len(means)))
    return points


def round_count_table(amounts: tuple[int, ...] = TABLE_AMOUNTS) -> dict[int, tuple[int, int, int]]:
    unit, powers, packed = unit_schedule(), powers_schedule(), packed_schedule()
    return {
        a: (
            rounds_for_amount(a, unit),
            rounds_for_amount(a, powers),
            rounds_for_amount(a, packed),
        )
        for a in amounts
    }


def bench(
    ns: tuple[int, ...] = SWEEP_NS,
    server_rounds: int = 100,
    client_ns: tuple[int, ...] = (10, 25, 50, 100),
    client_rounds: int = 20,
    parallel_groups: tuple[int, ...] = (),
) -> BenchReport:
    """The full measurement run behind the CSV and the plots."""
    server = bench_server(ns=ns, rounds=server_rounds)
    clients = []
    for n in client_ns:
        clients.extend(bench_client(n=n, rounds=client_rounds))
    parallel = (
        bench_group_parallelism(parallel_groups, n=25, rounds=server_rounds)
        if parallel_groups
        else []
    )
    return BenchReport(server, clients, round_count_table(), parallel)


def fit_exponent(points: list[ServerPoint]) -> float:
    """Least-squares slope of log(mean_us) against log(n)."""
    xs = [math.log(p.n) for p in points]
    ys = [math.log(p.mean_us) for p in points]
    xbar = sum(xs) / len(xs)
    ybar = sum(ys) / len(ys)
    num = sum((x - xbar) * (y - ybar) for x, y in zip(xs, ys))
    den = sum((x - xbar) ** 2 for x in xs)
    return num / den


def write_csv(path: str, report: BenchReport) -> None:
    """The sweep as one row per group size (medians; raw samples stay in
    the report object)."""
    fields = [
        "N",
        "server_us",
        "client_ms_semihonest",
        "client_ms_malicious",
        "bytes_up",
        "bytes_down",
    ]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in report.rows():
            w.writerow({k: ("" if row[k] is None else row[k]) for k in fields})
