"""Scenario assembly, the run loop and trace export."""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

from .. import cc
from .engine import SimError, Simulator
from .network import Network
from .topology import SimTopology, TopologyError
from .transports import BackgroundSource, FlowRecorder, LlmProtoFlow, TcpLikeFlow, UdpLikeFlow

PROTOCOLS = ("udp", "llmproto", "tcp")
CSV_COLUMNS = ("t_s", "throughput_bps", "rtt_ms", "loss_pct", "cwnd_pkts")
CWND_SAMPLE_US = 100_000


class EndpointMismatch(SimError, ValueError):
    pass


class UnknownHost(SimError, ValueError):
    pass


@dataclass
class FlowSpec:
    name: str
    src: str
    dst: str
    protocol: str | None = None
    messages: int | None = 10_000
    size: int = 1400
    rate_bps: float | None = 1_000_000
    reliable_fraction: float = 0.5
    waypoints: tuple = ()
    cc: str = "reno"
    start_us: int = 0


@dataclass
class BackgroundSpec:
    src: str
    dst: str
    rate_bps: float
    size: int = 1000
    on_us: int | None = None
    off_us: int = 0
    start_us: int = 0
    stop_us: int | None = None
    name: str | None = None


def _num(x, digits: int = 6):
    if x is None:
        return None
    return round(float(x), digits)


@dataclass
class FlowResult:
    name: str
    protocol: str
    stats: object
    mean_send_rate_bps: float
    rows: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        s = self.stats
        return {
            "protocol": self.protocol,
            "offered_reliable": s.offered_reliable,
            "offered_best_effort": s.offered_best_effort,
            "delivered_reliable": s.delivered_reliable,
            "delivered_best_effort": s.delivered_best_effort,
            "reliable_ratio": _num(s.reliable_ratio),
            "best_effort_ratio": _num(s.best_effort_ratio),
            "flow_completion_time_s": _num(s.flow_completion_time),
            "retransmissions": s.retransmissions,
            "mean_send_rate_bps": _num(self.mean_send_rate_bps, 1),
            **{k: v for k, v in sorted(self.extra.items())},
        }


@dataclass
class TraceMetrics:
    """Per-second traces plus final per-flow statistics."""

    flows: dict[str, FlowResult]
    duration_s: float
    conservation: dict = field(default_factory=dict)
    events: int = 0

    def to_csv(self, flow: str) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for row in self.flows[flow].rows:
            cells = []
            for v in row:
                if v is None:
                    cells.append("")
                elif isinstance(v, int):
                    cells.append(str(v))
                else:
                    cells.append(f"{v:.6f}")
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "duration_s": _num(self.duration_s),
            "flows": {name: r.summary() for name, r in sorted(self.flows.items())},
            "links": {f"{a}>{b}": c for (a, b), c in sorted(self.conservation.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"


class Scenario:
    """A simulator, a network and the endpoints installed on it."""

    def __init__(self, topology: SimTopology, seed: int = 0, registry: cc.Registry | None = None):
        self.topology = topology
        self.seed = seed
        self.sim = Simulator()
        self.net = Network(self.sim, topology, seed)
        self.registry = registry or cc.default_registry()
        self.flows: dict[str, object] = {}
        self.specs: dict[str, FlowSpec] = {}
        self.recorders: dict[str, FlowRecorder] = {}
        self.background: list[BackgroundSource] = []
        self._pending = 0
        self._sampling = False

    # build --------------------------------------------------------------------
    def _host(self, node: str, err=UnknownHost) -> None:
        if self.topology.nodes.get(node) != "host":
            raise err(f"{node} is not a host of the topology")

    def path_for(self, spec: FlowSpec) -> tuple:
        return self.topology.route_via(spec.src, spec.waypoints, spec.dst)

    def add_flow(self, spec: FlowSpec):
        if spec.protocol not in PROTOCOLS:
            raise EndpointMismatch(f"flow {spec.name}: unknown endpoint protocol {spec.protocol!r}")
        if spec.name in self.flows:
            raise EndpointMismatch(f"flow {spec.name} declared twice")
        self._host(spec.src, EndpointMismatch)
        self._host(spec.dst, EndpointMismatch)
        path = self.path_for(spec)
        rec = FlowRecorder(spec.name)
        self.net.recorders[spec.name] = rec
        common = dict(messages=spec.messages, size=spec.size, rate_bps=spec.rate_bps,
                      reliable_fraction=spec.reliable_fraction, start_us=spec.start_us,
                      on_done=self._flow_done)
        if spec.protocol == "udp":
            flow = UdpLikeFlow(self.net, spec.name, path, rec, **common)
        elif spec.protocol == "llmproto":
            flow = LlmProtoFlow(self.net, spec.name, path, rec, **common)
        else:
            conn = cc.Connection(self.registry.get(spec.cc))
            flow = TcpLikeFlow(self.net, spec.name, path, rec, conn, **common)
            if not self._sampling:
                self._sampling = True
                self.sim.schedule(0, self._sample_cwnd)
        self.flows[spec.name] = flow
        self.specs[spec.name] = spec
        self.recorders[spec.name] = rec
        if spec.messages is not None:
            self._pending += 1
        return flow

    def add_background(self, spec: BackgroundSpec) -> BackgroundSource | None:
        self._host(spec.src)
        self._host(spec.dst)
        if spec.rate_bps <= 0:
            return None
        name = spec.name or f"bg{len(self.background) + 1}"
        path = self.topology.route(spec.src, spec.dst)
        src = BackgroundSource(self.net, name, path, spec.rate_bps, spec.size, spec.on_us,
                               spec.off_us, spec.start_us, spec.stop_us)
        self.background.append(src)
        return src

    def at(self, time_us: int, fn) -> None:
        """Run ``fn(scenario)`` at simulated time ``time_us``."""
        self.sim.schedule(time_us, fn, self)

    def _flow_done(self, flow) -> None:
        self._pending -= 1

    def _sample_cwnd(self) -> None:
        now = self.sim.now
        for name, flow in self.flows.items():
            if isinstance(flow, TcpLikeFlow) and not flow.done:
                self.recorders[name].cwnd(now, flow.conn.state.cwnd)
        self.sim.schedule(now + CWND_SAMPLE_US, self._sample_cwnd)

    # run ----------------------------------------------------------------------
    def run(self, duration_us: int, stop_when_done: bool = True) -> TraceMetrics:
        stop = None
        if stop_when_done and self._pending > 0:
            stop = lambda: self._pending <= 0  # noqa: E731
        self.sim.run(int(duration_us), stop)
        return self.metrics()

    def metrics(self) -> TraceMetrics:
        last_sec = max(0, (self.sim.now - 1) // 1_000_000)
        results = {}
        for name, flow in self.flows.items():
            spec = self.specs[name]
            try:
                stats = flow.stats()
            except Exception as exc:  # stream still open at the horizon
                raise SimError(f"flow {name} did not complete: {exc}") from exc
            extra = {}
            if isinstance(flow, TcpLikeFlow):
                extra = {"timeouts": flow.timeouts, "fast_retransmits": flow.fast_retransmits,
                         "undos": flow.undos, "resets": flow.resets, "scheme": flow.conn.scheme.name}
            results[name] = FlowResult(name, spec.protocol, stats, flow.mean_send_rate_bps(),
                                       self.recorders[name].rows(last_sec), extra)
        return TraceMetrics(results, self.sim.now / 1e6, self.net.conservation(), self.sim.processed)


def attach_background_traffic(scenario: Scenario, spec: BackgroundSpec) -> Scenario:
    scenario.add_background(spec)
    return scenario


def run_scenario(topology: SimTopology, workload, endpoints: dict, nf_chain=None, seed: int = 0,
                 duration_us: int = 600_000_000, background=(), stop_when_done: bool = True) -> TraceMetrics:
    """Run ``workload`` (FlowSpecs) with ``endpoints`` mapping flow name to protocol."""
    names = {f.name for f in workload}
    if names != set(endpoints):
        raise EndpointMismatch(f"workload flows {sorted(names)} vs endpoints {sorted(endpoints)}")
    scn = Scenario(topology, seed)
    for bg in background:
        scn.add_background(bg)
    for spec in workload:
        spec = FlowSpec(**{**spec.__dict__, "protocol": endpoints[spec.name]})
        if nf_chain is not None and not spec.waypoints:
            spec.waypoints = nf_chain.waypoints
        scn.add_flow(spec)
    if nf_chain is not None:
        nf_chain.attach(scn.net, sorted(names))
    return scn.run(duration_us, stop_when_done)


__all__ = [
    "BackgroundSpec", "EndpointMismatch", "FlowResult", "FlowSpec", "Scenario", "TraceMetrics",
    "UnknownHost", "attach_background_traffic", "run_scenario", "TopologyError",
]
