"""SFC resource allocation: infrastructure, candidate paths, embedding, accounting."""
from .embed import (
    DecisionMetrics,
    EmptyInput,
    InvertedBounds,
    NegativeWeight,
    ObjectiveWeights,
    Placement,
    Rejected,
    SfcRequest,
    ZeroWeights,
    choose,
    embed_sfc,
    enumerate_candidates,
    jain_index,
    minmax_normalize,
    normalize_metrics,
    objective,
)
from .infra import AllocError, Infrastructure, Link, MalformedInfrastructure, Node, default_infrastructure
from .paths import CandidatePath, NoPath, PathCache, RaReport, SamePoint, candidate_paths, k_shortest_paths
from .sim import (
    AllocationState,
    ArrivalProcess,
    MetricsWindow,
    WindowIncomplete,
    WorkloadSchedule,
    advance_clock,
    aggregate,
    metrics_window,
)

__all__ = [
    "AllocError", "AllocationState", "ArrivalProcess", "CandidatePath", "DecisionMetrics", "EmptyInput",
    "Infrastructure", "InvertedBounds", "Link", "MalformedInfrastructure", "MetricsWindow", "NegativeWeight",
    "NoPath", "Node", "ObjectiveWeights", "PathCache", "Placement", "RaReport", "Rejected", "SamePoint",
    "SfcRequest", "WindowIncomplete", "WorkloadSchedule", "ZeroWeights", "advance_clock", "aggregate",
    "candidate_paths", "choose", "default_infrastructure", "embed_sfc", "enumerate_candidates",
    "jain_index", "k_shortest_paths", "metrics_window", "minmax_normalize", "normalize_metrics", "objective",
]
