import pytest
from hypothesis import given, settings, strategies as st

from agentnet.netsim import (
    BackgroundSpec, ClockViolation, EmptyQueue, EndpointMismatch, FlowSpec, LinkSpec, Scenario,
    SimTopology, Simulator, UnknownHost, run_scenario, step,
)
from agentnet.netsim.topology import DisconnectedTopology, TopologyError


def line(loss=0.0, rate=10_000_000, bottleneck=None, queue=100):
    nodes = {"h1": "host", "s1": "switch", "h2": "host", "h3": "host"}
    links = [
        LinkSpec("h1", "s1", rate, 5_000),
        LinkSpec("s1", "h2", bottleneck or rate, 5_000, loss=loss, queue_packets=queue, bidirectional_loss=False),
        LinkSpec("h3", "s1", rate, 1_000),
    ]
    return SimTopology(nodes, links)


def test_ties_run_in_insertion_order():
    sim = Simulator()
    seen = []
    for i in range(5):
        sim.schedule(10, seen.append, i)
    sim.schedule(5, seen.append, "early")
    while len(sim):
        step(sim)
    assert seen == ["early", 0, 1, 2, 3, 4]


def test_clock_and_empty_queue():
    sim = Simulator()
    sim.schedule(100, lambda: None)
    sim.step()
    with pytest.raises(ClockViolation):
        sim.schedule(99, lambda: None)
    with pytest.raises(EmptyQueue):
        sim.step()


@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=50))
@settings(max_examples=200)
def test_clock_is_monotone(times):
    sim = Simulator()
    order = []
    for t in times:
        sim.schedule(t, lambda t=t: order.append(sim.now))
    sim.run(20_000)
    assert order == sorted(times) and sim.now == 20_000


def test_routing():
    topo = line()
    assert topo.route("h1", "h2") == ("h1", "s1", "h2")
    assert topo.route_via("h1", ("s1",), "h2") == ("h1", "s1", "h2")
    with pytest.raises(TopologyError):
        LinkSpec("a", "b", 0, 1)
    iso = SimTopology({"a": "host", "b": "host"}, [])
    with pytest.raises(DisconnectedTopology):
        iso.route("a", "b")


def _udp(loss, seed, messages=10_000):
    flows = [FlowSpec("f", "h1", "h2", messages=messages, rate_bps=1_000_000)]
    return run_scenario(line(loss), flows, {"f": "udp"}, seed=seed)


def test_same_seed_same_trace():
    a, b = _udp(0.05, 3, 2000), _udp(0.05, 3, 2000)
    assert a.to_csv("f") == b.to_csv("f") and a.to_json() == b.to_json()
    assert _udp(0.05, 4, 2000).to_json() != a.to_json()


def test_udp_delivery_matches_loss():
    # 20% Bernoulli loss on the last hop: expected delivery 80%
    m = _udp(0.2, 11)
    s = m.flows["f"].stats
    total = (s.delivered_reliable + s.delivered_best_effort) / (s.offered_reliable + s.offered_best_effort)
    assert total == pytest.approx(0.8, abs=0.02)


def test_link_conservation():
    m = _udp(0.1, 5, 3000)
    for key, c in m.conservation.items():
        assert c["offered"] == c["delivered"] + c["dropped_loss"] + c["dropped_queue"] + c["in_flight"], key


def test_queue_overflow_drops():
    flows = [FlowSpec("f", "h1", "h2", messages=500, rate_bps=10_000_000)]
    m = run_scenario(line(bottleneck=1_000_000, queue=10), flows, {"f": "udp"})
    c = m.conservation[("s1", "h2")]
    assert c["dropped_queue"] > 0 and c["dropped_loss"] == 0


def _tcp(background=()):
    flows = [FlowSpec("f", "h1", "h2", protocol="tcp", messages=None, rate_bps=None)]
    return run_scenario(line(bottleneck=5_000_000), flows, {"f": "tcp"}, duration_us=20_000_000,
                        background=background, stop_when_done=False)


def test_background_reduces_foreground():
    quiet = _tcp()
    busy = _tcp([BackgroundSpec("h3", "h2", 3_000_000)])
    q = sum(r[1] for r in quiet.flows["f"].rows)
    b = sum(r[1] for r in busy.flows["f"].rows)
    assert b < q


def test_zero_rate_background_is_inert():
    assert _tcp().to_csv("f") == _tcp([BackgroundSpec("h3", "h2", 0)]).to_csv("f")


def test_on_off_emits_half():
    scn = Scenario(line())
    src = scn.add_background(BackgroundSpec("h3", "h2", 1_000_000, size=1000, on_us=1_000_000, off_us=1_000_000))
    scn.run(10_000_000, stop_when_done=False)
    always = 10_000_000 // 8000
    assert src.emitted == pytest.approx(always / 2, abs=2)


def test_endpoint_errors():
    flows = [FlowSpec("f", "h1", "h2")]
    with pytest.raises(EndpointMismatch):
        run_scenario(line(), flows, {"g": "udp"})
    with pytest.raises(EndpointMismatch):
        run_scenario(line(), flows, {"f": "quic"})
    with pytest.raises(UnknownHost):
        Scenario(line()).add_background(BackgroundSpec("s1", "h2", 1e6))
