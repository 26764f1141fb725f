"""Discrete-event network simulation and run metrics."""

from .config import CONFIG_FIELDS, SimConfig
from .engine import InvariantError, Latency, SimResult, Simulation, deliver, sample_mining_time, simulate
from .metrics import (
    CSV_HEADER,
    CSV_MAGIC,
    MetricsReport,
    build_report,
    measure_pf,
    measure_reversals,
    measure_safety,
    run_simulation,
)

__all__ = [
    "CONFIG_FIELDS",
    "CSV_HEADER",
    "CSV_MAGIC",
    "InvariantError",
    "Latency",
    "MetricsReport",
    "SimConfig",
    "SimResult",
    "Simulation",
    "build_report",
    "deliver",
    "measure_pf",
    "measure_reversals",
    "measure_safety",
    "run_simulation",
    "sample_mining_time",
    "simulate",
]
