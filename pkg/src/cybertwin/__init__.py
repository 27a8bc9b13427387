"""Deterministic discrete-event simulator of a cybertwin-based cloud network."""

from .cloudos import CloudOS, PricingParams, Priority, credits, unit_price
from .harness import (
    MetricsReport,
    Scenario,
    ScenarioConfig,
    WorkloadSpec,
    baseline_end_to_end,
    compare,
    run_scenario,
)
from .model import NetworkAddress, ObjectId, ResourceVector, ServiceDescriptor, Topology, path_latency
from .naming import NameService
from .sim import Engine
from .twin import CybertwinNetwork

__version__ = "0.1.0"

__all__ = [
    "CloudOS",
    "CybertwinNetwork",
    "Engine",
    "MetricsReport",
    "NameService",
    "NetworkAddress",
    "ObjectId",
    "PricingParams",
    "Priority",
    "ResourceVector",
    "Scenario",
    "ScenarioConfig",
    "ServiceDescriptor",
    "Topology",
    "WorkloadSpec",
    "baseline_end_to_end",
    "compare",
    "credits",
    "path_latency",
    "run_scenario",
    "unit_price",
]
