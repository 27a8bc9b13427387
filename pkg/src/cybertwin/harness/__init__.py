"""Scenario generation, the end-to-end baseline and metric aggregation."""

from .baseline import BaselineNetwork
from .metrics import MetricsReport, render_table
from .scenario import (
    MODES,
    MigrationPolicy,
    Scenario,
    ScenarioConfig,
    ScenarioResult,
    baseline_end_to_end,
    compare,
    run_scenario,
)
from .workload import Workload, WorkloadEvent, WorkloadSpec, generate_workload, grid_topology, service_catalog

__all__ = [
    "BaselineNetwork",
    "MODES",
    "MetricsReport",
    "MigrationPolicy",
    "Scenario",
    "ScenarioConfig",
    "ScenarioResult",
    "Workload",
    "WorkloadEvent",
    "WorkloadSpec",
    "baseline_end_to_end",
    "compare",
    "generate_workload",
    "grid_topology",
    "render_table",
    "run_scenario",
    "service_catalog",
]
