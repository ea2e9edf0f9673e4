import random

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from agentnet.alloc import (
    AllocationState, ArrivalProcess, DecisionMetrics, Infrastructure, Link, NegativeWeight, Node,
    ObjectiveWeights, PathCache, Placement, Rejected, SamePoint, SfcRequest, WindowIncomplete,
    WorkloadSchedule, ZeroWeights, candidate_paths, choose, default_infrastructure, embed_sfc,
    enumerate_candidates, k_shortest_paths, objective,
)
from agentnet.alloc.embed import Candidate


def test_objective_oracles():
    m = DecisionMetrics(cost=0.4, profit=0.6, utilization=0.5, fairness_index=0.8, green_penalty=0.2)
    # 0.25 * (0.4 + 0.4 + (0.5 + 0.2) + 0.2)
    assert objective(m, ObjectiveWeights(0.25, 0.25, 0.25, 0.25)) == pytest.approx(0.425, abs=1e-12)
    assert objective(m, ObjectiveWeights(0, 1, 0, 0)) == pytest.approx(0.4, abs=1e-12)


def test_weights_validation():
    assert ObjectiveWeights(1, 1, 1, 1).as_tuple() == (0.25, 0.25, 0.25, 0.25)
    with pytest.raises(NegativeWeight):
        ObjectiveWeights(-0.1, 1, 0, 0)
    with pytest.raises(ZeroWeights):
        ObjectiveWeights(0, 0, 0, 0)


def _random_infra(seed, n=12, m=26):
    rng = random.Random(seed)
    ids = [f"v{i:02d}" for i in range(n)]
    nodes = {i: Node(i, 10, 0.05, 0.02, 0.07) for i in ids}
    pairs = {frozenset((ids[i], ids[(i + 1) % n])) for i in range(n)}
    while len(pairs) < m:
        pairs.add(frozenset(rng.sample(ids, 2)))
    links = {}
    for p in pairs:
        a, b = sorted(p)
        links[p] = Link(a, b, 1e9, rng.uniform(1, 10))
    return Infrastructure(nodes, links)


@pytest.mark.parametrize("seed", range(10))
def test_yen_matches_networkx(seed):
    infra = _random_infra(seed)
    g = nx.Graph()
    for link in infra.links.values():
        g.add_edge(link.a, link.b, w=link.latency_ms)
    ours = k_shortest_paths(infra, "v00", "v06", 10)
    ref = []
    for path in nx.shortest_simple_paths(g, "v00", "v06", weight="w"):
        ref.append(tuple(path))
        if len(ref) == 10:
            break
    assert [p for _, p in ours] == ref
    lat = [l for l, _ in ours]
    assert lat == sorted(lat)


def test_yen_tie_break_and_errors():
    nodes = {i: Node(i, 1, 0, 0, 0) for i in "sabt"}
    links = {frozenset(e): Link(*e, 1e9, 1.0) for e in [("s", "a"), ("s", "b"), ("a", "t"), ("b", "t")]}
    infra = Infrastructure(nodes, links)
    assert [p for _, p in k_shortest_paths(infra, "s", "t", 5)] == [("s", "a", "t"), ("s", "b", "t")]
    with pytest.raises(SamePoint):
        k_shortest_paths(infra, "s", "s", 3)


def _cands(rng, n):
    out = []
    for i in range(n):
        m = DecisionMetrics(rng.uniform(0, 10), rng.uniform(0, 10), rng.random(), rng.random(), rng.uniform(0, 5))
        out.append(Candidate(i, (f"p{i}",), ((f"p{i}", 1),), m))
    return out


def test_pure_green_weight_picks_min_green():
    rng = random.Random(1)
    for _ in range(1000):
        cands = _cands(rng, rng.randint(1, 8))
        best, _ = choose(cands, ObjectiveWeights(0, 0, 0, 1))
        greens = [c.metrics.green_penalty for c in cands]
        assert greens[best] == min(greens)


def test_green_weight_monotone():
    # raising a4 never raises the chosen candidate's green penalty
    rng = random.Random(2)
    for _ in range(1000):
        cands = _cands(rng, rng.randint(2, 8))
        base = (rng.random(), rng.random(), rng.random())
        last = None
        for a4 in (0.0, 0.2, 0.5, 1.0, 3.0, 10.0):
            best, _ = choose(cands, ObjectiveWeights(*base, a4) if sum(base) + a4 else ObjectiveWeights(0, 0, 0, 1))
            g = cands[best].metrics.green_penalty
            if last is not None:
                assert g <= last + 1e-12
            last = g


def test_choose_tie_goes_to_lowest_path():
    m = DecisionMetrics(1, 1, 0.5, 0.5, 1)
    cands = [Candidate(2, ("x",), (("x", 1),), m), Candidate(0, ("y",), (("y", 1),), m)]
    assert choose(cands, ObjectiveWeights())[0] == 1


def test_poisson_arrival_count():
    infra = default_infrastructure(0)
    arr = ArrivalProcess(infra.node_ids, WorkloadSchedule(change_at_h=None, horizon_h=24), seed=5)
    n = sum(1 for _ in arr)
    # mean 8640, sd ~93
    assert abs(n - 8640) < 4 * 93


def test_rate_change_doubles_arrivals():
    infra = default_infrastructure(0)
    reqs = list(ArrivalProcess(infra.node_ids, WorkloadSchedule(change_at_h=12, horizon_h=24), seed=3))
    a = sum(r.arrival_s < 12 * 3600 for r in reqs)
    assert (len(reqs) - a) / a == pytest.approx(2.0, rel=0.08)


def _tiny_infra(n=24):
    ids = [f"n{i:02d}" for i in range(n)]
    nodes = {i: Node(i, 10, op_cost=0.02, green_penalty=0.0, price=0.05) for i in ids}
    links = {frozenset((ids[i], ids[(i + 1) % n])): Link(*sorted((ids[i], ids[(i + 1) % n])), 1e9, 1.0)
             for i in range(n)}
    return Infrastructure(nodes, links)


def _quiet_schedule():
    return WorkloadSchedule(base_rate_per_min=1e-9, change_at_h=None, horizon_h=48, lifetime_mean_s=600)


def test_idle_accrues_nothing():
    state = AllocationState(_tiny_infra(), _quiet_schedule(), seed=0)
    state.advance(3600)
    for key in ("cost", "revenue", "profit", "green_penalty", "utilization"):
        assert sum(state.series[key]) == 0.0


def test_profit_rate_and_fairness_of_single_instance():
    infra = _tiny_infra()
    state = AllocationState(infra, _quiet_schedule(), seed=0)
    req = SfcRequest(0, "n00", "n01", 10, 1e6, 100.0, lifetime_s=1e9, arrival_s=0.0)
    assert isinstance(state._arrive(req), Placement)
    state.advance(120)
    # ten instances fill one node: the profit rate is 10 * 0.03 per second
    assert state.series["profit"][1] == pytest.approx(10 * 0.03 * 60)
    assert state.series["fairness"][1] == pytest.approx(1 / 24)
    assert state.series["utilization"][1] == pytest.approx(10 / 240)


def test_window_incomplete():
    state = AllocationState(_tiny_infra(), _quiet_schedule(), seed=0)
    state.advance(3600)
    with pytest.raises(WindowIncomplete):
        state.metrics_window()
    state.advance(23 * 3600)
    w = state.metrics_window()
    assert w.span_h == 24.0
    with pytest.raises(WindowIncomplete):
        state.metrics_window()


def test_resource_conservation_over_a_day():
    infra = default_infrastructure(0)
    sched = WorkloadSchedule(change_at_h=None, horizon_h=6, lifetime_mean_s=600)
    state = AllocationState(infra, sched, seed=1, k=10)
    live = {}
    for _ in range(36):
        for kind, obj in state.advance(600):
            if kind == "arrive" and isinstance(obj, Placement):
                live[obj.request.id] = obj
            elif kind == "expire":
                del live[obj.request.id]
        for node in infra.nodes.values():
            assert 0 <= node.used <= node.capacity
        assert infra.committed() == sum(k for p in live.values() for _, k in p.assignment)
    assert state.accepted > 0


def test_rejection_reasons():
    infra = _tiny_infra(4)
    req = SfcRequest(0, "n00", "n02", 5, 1e6, latency_bound_ms=0.5, lifetime_s=10, arrival_s=0)
    assert embed_sfc(req, infra, ObjectiveWeights()) == Rejected(req, "latency")
    big = SfcRequest(1, "n00", "n02", 5, 2e9, 100, 10, 0)
    assert embed_sfc(big, infra, ObjectiveWeights()).reason == "bandwidth"
    huge = SfcRequest(2, "n00", "n02", 20, 1e6, 100, 10, 0)
    infra.nodes["n00"].used = 10
    infra.nodes["n01"].used = 10
    infra.nodes["n03"].used = 10
    assert embed_sfc(huge, infra, ObjectiveWeights()).reason == "capacity"


def test_candidate_report():
    infra = default_infrastructure(0)
    rep = candidate_paths(infra, "n01", "n12", 10)
    assert len(rep.paths) == 10 and rep.paths[0].nodes[0] == "n01"
    assert "path 0:" in rep.render()


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10), st.floats(0, 1), st.floats(0, 1), st.floats(0, 5)),
                min_size=1, max_size=8),
       st.tuples(*[st.floats(0, 1)] * 4).filter(lambda w: sum(w) > 1e-3))
@settings(max_examples=1000)
def test_scores_in_unit_box(rows, w):
    cands = [Candidate(i, ("a",), (("a", 1),), DecisionMetrics(*r)) for i, r in enumerate(rows)]
    best, scores = choose(cands, ObjectiveWeights(*w))
    assert all(-1e-9 <= s <= 2 + 1e-9 for s in scores)
    assert scores[best] == min(scores)
