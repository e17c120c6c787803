"""Scenario loading, the simulation loop, metrics and batch runs."""
from .batch import run_batch
from .engine import run_scenario
from .metrics import rise_time, summarize, total_scan_certainty, victim_summary
from .records import RunRecord
from .scenario import ScenarioConfig, bundled_scenario, load_scenario, resolve_scenario

__all__ = [
    "RunRecord",
    "ScenarioConfig",
    "bundled_scenario",
    "load_scenario",
    "resolve_scenario",
    "rise_time",
    "run_batch",
    "run_scenario",
    "summarize",
    "total_scan_certainty",
    "victim_summary",
]
