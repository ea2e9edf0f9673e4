"""Seeded discrete-event network simulator."""
from .engine import ClockViolation, EmptyQueue, SimError, SimEvent, Simulator, step
from .network import Drop, Emit, Forward, Network, Packet, Wakeup
from .scenario import (
    BackgroundSpec,
    EndpointMismatch,
    FlowSpec,
    Scenario,
    TraceMetrics,
    UnknownHost,
    attach_background_traffic,
    run_scenario,
)
from .topology import DisconnectedTopology, LinkSpec, SimTopology, TopologyError

__all__ = [
    "BackgroundSpec", "ClockViolation", "DisconnectedTopology", "Drop", "Emit", "EmptyQueue",
    "EndpointMismatch", "FlowSpec", "Forward", "LinkSpec", "Network", "Packet", "Scenario",
    "SimError", "SimEvent", "SimTopology", "Simulator", "TopologyError", "TraceMetrics",
    "UnknownHost", "Wakeup", "attach_background_traffic", "run_scenario", "step",
]
