"""Weighted multi-objective SFC embedding."""
from __future__ import annotations

from dataclasses import dataclass

from .. import kernels
from .infra import AllocError, Infrastructure
from .paths import PathCache

METRIC_NAMES = ("cost", "profit", "utilization", "fairness", "green_penalty")


class NegativeWeight(AllocError):
    pass


class ZeroWeights(AllocError):
    pass


class EmptyInput(AllocError):
    pass


class InvertedBounds(AllocError):
    pass


@dataclass(frozen=True)
class ObjectiveWeights:
    """(cost, profit, utilization+fairness, green) weights, stored summing to 1."""

    a1: float = 0.0
    a2: float = 1.0
    a3: float = 0.0
    a4: float = 0.0

    def __post_init__(self):
        raw = (self.a1, self.a2, self.a3, self.a4)
        for i, w in enumerate(raw, 1):
            if w < 0:
                raise NegativeWeight(f"a{i}={w} is negative")
        total = sum(raw)
        if total <= 0:
            raise ZeroWeights("weights must not all be zero")
        for name, w in zip(("a1", "a2", "a3", "a4"), raw):
            object.__setattr__(self, name, w / total)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a1, self.a2, self.a3, self.a4)

    def render(self) -> str:
        return f"a1={self.a1:.4f} a2={self.a2:.4f} a3={self.a3:.4f} a4={self.a4:.4f}"


@dataclass(frozen=True)
class DecisionMetrics:
    cost: float
    profit: float
    utilization: float
    fairness_index: float
    green_penalty: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.cost, self.profit, self.utilization, self.fairness_index, self.green_penalty)


def jain_index(values) -> float:
    try:
        return kernels.jain_index(list(values))
    except ValueError as exc:
        if not len(values):
            raise EmptyInput(str(exc)) from None
        raise AllocError(str(exc)) from None


def minmax_normalize(x: float, lo: float, hi: float) -> float:
    if lo > hi:
        raise InvertedBounds(f"min {lo} exceeds max {hi}")
    return kernels.minmax_normalize(x, lo, hi)


def objective(m: DecisionMetrics, w: ObjectiveWeights) -> float:
    """Score of already-normalised metrics; lower is better."""
    return (w.a1 * m.cost + w.a2 * (1.0 - m.profit)
            + w.a3 * (m.utilization + (1.0 - m.fairness_index)) + w.a4 * m.green_penalty)


def normalize_metrics(raw: list[DecisionMetrics]) -> list[DecisionMetrics]:
    cols = list(zip(*(m.as_tuple() for m in raw)))
    bounds = [(min(c), max(c)) for c in cols]
    return [
        DecisionMetrics(*(minmax_normalize(v, lo, hi) for v, (lo, hi) in zip(m.as_tuple(), bounds)))
        for m in raw
    ]


@dataclass(frozen=True)
class SfcRequest:
    id: int
    src: str
    dst: str
    nf_count: int
    bandwidth_bps: float
    latency_bound_ms: float
    lifetime_s: float
    arrival_s: float

    def __post_init__(self):
        if not 1 <= self.nf_count <= 20:
            raise AllocError(f"request {self.id}: nf_count {self.nf_count} outside [1, 20]")
        if self.lifetime_s <= 0:
            raise AllocError(f"request {self.id}: lifetime must be positive")


@dataclass(frozen=True)
class Placement:
    request: SfcRequest
    path_index: int
    path: tuple[str, ...]
    assignment: tuple[tuple[str, int], ...]  # (node, instances) along the path
    metrics: DecisionMetrics
    score: float

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.assignment)


@dataclass(frozen=True)
class Rejected:
    request: SfcRequest
    reason: str


@dataclass(frozen=True)
class Candidate:
    path_index: int
    path: tuple[str, ...]
    assignment: tuple[tuple[str, int], ...]
    metrics: DecisionMetrics


def _fill(infra: Infrastructure, path, start: int, count: int):
    out = []
    left = count
    for node in path[start:]:
        free = infra.nodes[node].free
        if free <= 0:
            continue
        take = free if free < left else left
        out.append((node, take))
        left -= take
        if left == 0:
            return tuple(out)
    return None


def enumerate_candidates(req: SfcRequest, infra: Infrastructure, paths: PathCache) -> tuple[list[Candidate], str]:
    """Every (path, first hosting node) forward fill that fits; also the
    reason when nothing does."""
    nodes = infra.nodes
    ids = infra.node_ids
    # running sums for Jain over node utilisations
    utils = {n: nodes[n].utilization for n in ids}
    s1 = sum(utils.values())
    s2 = sum(u * u for u in utils.values())
    n_nodes = len(ids)
    out: list[Candidate] = []
    seen = set()
    reason = "capacity"
    any_latency = any_bw = False
    for pi, (lat, path) in enumerate(paths.get(req.src, req.dst)):
        if lat > req.latency_bound_ms:
            continue
        any_latency = True
        if any(infra.link(a, b).free_bps < req.bandwidth_bps for a, b in zip(path, path[1:])):
            continue
        any_bw = True
        for start in range(len(path)):
            assign = _fill(infra, path, start, req.nf_count)
            if assign is None or assign in seen:
                continue
            seen.add(assign)
            cost = green = profit = 0.0
            peak = 0.0
            t1, t2 = s1, s2
            for node, k in assign:
                nd = nodes[node]
                cost += k * nd.op_cost
                green += k * nd.green_penalty
                profit += k * (nd.price - nd.op_cost)
                old = utils[node]
                new = (nd.used + k) / nd.capacity
                t1 += new - old
                t2 += new * new - old * old
                if new > peak:
                    peak = new
            fair = 1.0 if t2 <= 0 else min(1.0, t1 * t1 / (n_nodes * t2))
            out.append(Candidate(pi, path, assign, DecisionMetrics(cost, profit, peak, fair, green)))
    if not out:
        if not any_latency:
            reason = "latency"
        elif not any_bw:
            reason = "bandwidth"
    return out, reason


def choose(candidates: list[Candidate], weights: ObjectiveWeights) -> tuple[int, list[float]]:
    """Index of the best candidate; ties go to the lowest path index, then node ids."""
    order = sorted(range(len(candidates)),
                   key=lambda i: (candidates[i].path_index, tuple(n for n, _ in candidates[i].assignment)))
    rows = [candidates[i].metrics.as_tuple() for i in order]
    scores, best = kernels.score_candidates(rows, weights.as_tuple())
    inv = [0.0] * len(candidates)
    for pos, i in enumerate(order):
        inv[i] = scores[pos]
    return order[best], inv


def commit(infra: Infrastructure, placement: Placement) -> None:
    for node, k in placement.assignment:
        nd = infra.nodes[node]
        if nd.used + k > nd.capacity:
            raise AllocError(f"node {node} over capacity")
        nd.used += k
    for a, b in zip(placement.path, placement.path[1:]):
        infra.link(a, b).used_bps += placement.request.bandwidth_bps


def release(infra: Infrastructure, placement: Placement) -> None:
    for node, k in placement.assignment:
        infra.nodes[node].used -= k
    for a, b in zip(placement.path, placement.path[1:]):
        infra.link(a, b).used_bps -= placement.request.bandwidth_bps


def embed_sfc(req: SfcRequest, infra: Infrastructure, weights: ObjectiveWeights,
              paths: PathCache | None = None, k: int = 5, do_commit: bool = True) -> Placement | Rejected:
    if req.nf_count > infra.total_capacity - infra.committed():
        return Rejected(req, "capacity")
    paths = paths or PathCache(infra, k)
    cands, reason = enumerate_candidates(req, infra, paths)
    if not cands:
        return Rejected(req, reason)
    best, scores = choose(cands, weights)
    c = cands[best]
    placement = Placement(req, c.path_index, c.path, c.assignment, c.metrics, scores[best])
    if do_commit:
        commit(infra, placement)
    return placement
