"""Plots for the round-count and performance results.

Everything renders to PNG via the non-interactive Agg backend so the figure
scripts run headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from ..config import Mode  # noqa: E402
from ..planner import rounds_for_amount  # noqa: E402
from ..schedule import packed_schedule, powers_schedule, unit_schedule  # noqa: E402
from .bench import BenchReport, ClientPoint, ServerPoint, bandwidth_bytes, write_csv  # noqa: E402

FIG4_AMOUNTS = (100, 1000, 10000, 20000, 40000, 60000, 80000, 100000)

# Published single-machine numbers the plots are compared against.
REFERENCE_SERVER_US = {
    5: 196, 10: 190, 15: 219, 20: 246, 25: 271, 30: 247, 40: 301,
    50: 391, 60: 517, 70: 660, 80: 870, 90: 987, 100: 1199,
}
REFERENCE_CLIENT_MS = {"semihonest": 36.4, "malicious": 43.5}
FLAT_BASELINE_MS = 800.0       # per-transaction latency of the ledger baseline
FLAT_BASELINE_KB = 45.0        # per-transaction bandwidth of the ledger baseline


def fig_round_counts(path: str) -> None:
    naive = [rounds_for_amount(a, unit_schedule()) for a in FIG4_AMOUNTS]
    powers = [rounds_for_amount(a, powers_schedule()) for a in FIG4_AMOUNTS]
    packed = [rounds_for_amount(a, packed_schedule()) for a in FIG4_AMOUNTS]
    dollars = [a / 100 for a in FIG4_AMOUNTS]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(dollars, naive, "o-", label="unit rounds")
    ax.plot(dollars, powers, "s-", label="powers-of-two schedule")
    ax.plot(dollars, packed, "^-", label="packed (6 slots)")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("transaction amount ($)")
    ax.set_ylabel("rounds to complete")
    ax.set_title("Rounds per transaction amount")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_server_scaling(points: list[ServerPoint], path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([p.n for p in points], [p.mean_us for p in points], "o-", label="this implementation")
    ref = sorted(REFERENCE_SERVER_US.items())
    ax.plot([n for n, _ in ref], [v for _, v in ref], "s--", alpha=0.6, label="published reference")
    ax.set_xlabel("group size N")
    ax.set_ylabel("server time per round (µs)")
    ax.set_title("Server round processing")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_client_modes(points: list[ClientPoint], path: str) -> None:
    labels = [p.mode.value for p in points]
    ours = [p.mean_ms for p in points]
    refs = [REFERENCE_CLIENT_MS[p.mode.value] for p in points]

    fig, ax = plt.subplots(figsize=(6, 4))
    xs = range(len(labels))
    ax.bar([x - 0.2 for x in xs], ours, width=0.4, label="this implementation")
    ax.bar([x + 0.2 for x in xs], refs, width=0.4, alpha=0.6, label="published reference (handset)")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels)
    ax.set_ylabel(f"client time per round (ms), N={points[0].n}")
    ax.set_title("Client round cost by mode")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_baseline_comparison(client_ms: float, n: int, path: str) -> None:
    """Per-round latency and bandwidth against a flat ledger-style baseline."""
    up, down = bandwidth_bytes(n)
    ours_kb = (up + down) / 1024

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 4))
    ax1.bar(["this system", "baseline"], [client_ms, FLAT_BASELINE_MS])
    ax1.set_yscale("log")
    ax1.set_ylabel("ms per transaction round")
    ax1.set_title(f"Latency (N={n})")
    ax2.bar(["this system", "baseline"], [ours_kb, FLAT_BASELINE_KB])
    ax2.set_yscale("log")
    ax2.set_ylabel("kB per transaction round")
    ax2.set_title(f"Bandwidth (N={n})")
    for ax in (ax1, ax2):
        ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def emit_figures(report: BenchReport, outdir: str) -> list[str]:
    """Write the sweep CSV plus every plot; returns the paths written."""
    os.makedirs(outdir, exist_ok=True)
    # the mode comparison is plotted at the largest size measured for both
    # modes, the baseline comparison at the smallest
    mode_ns = sorted(
        {p.n for p in report.clients if p.mode is Mode.SEMIHONEST}
        & {p.n for p in report.clients if p.mode is Mode.MALICIOUS}
    )
    modes_at = [report.client_at(mode_ns[-1], m) for m in Mode]
    baseline = report.client_at(mode_ns[0], Mode.SEMIHONEST)

    paths = {
        "bench.csv": lambda p: write_csv(p, report),
        "round_counts.png": lambda p: fig_round_counts(p),
        "server_scaling.png": lambda p: fig_server_scaling(report.server, p),
        "client_modes.png": lambda p: fig_client_modes(modes_at, p),
        "baseline_comparison.png": lambda p: fig_baseline_comparison(
            baseline.mean_ms, baseline.n, p
        ),
    }
    out = []
    for name, render in paths.items():
        target = os.path.join(outdir, name)
        render(target)
        out.append(target)
    return out
