"""Deterministic simulator for a blockchain-mediated knowledge-sharing protocol.

Submodules: ledger (prefixed on-chain store), reputation (consistency-based
scoring), poi (impact rewards), procache (reputation-aware prompt cache),
session (query lifecycle), agents (honest and Byzantine behaviors),
simulator (round engine), config, outputs and cli.
"""

from .config import ConfigError, ScenarioConfig, load_scenario, scenario_from_dict
from .simulator import MetricsFrame, RunResult, Simulation, dedup_experiment, run, sweep

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ScenarioConfig", "load_scenario", "scenario_from_dict",
    "MetricsFrame", "RunResult", "Simulation", "dedup_experiment", "run", "sweep",
    "__version__",
]
