"""In-process simulation: harness, plaintext oracle, adversaries, benchmarks."""

from .harness import InProcessGroup, RoundReport
from .oracle import LedgerOracle
from .scenario import Scenario, ScenarioReport, random_scenario, run_scenario

__all__ = [
    "InProcessGroup",
    "RoundReport",
    "LedgerOracle",
    "Scenario",
    "ScenarioReport",
    "random_scenario",
    "run_scenario",
]
