"""The three experiment runners and the output writer."""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import statistics
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import cc, nfs
from .agents import (
    DecisionLog, HttpReasoner, Reasoner, RecordingReasoner, ScriptedReasoner, cc_agent_evaluate,
    fuse_reports, load_script, ra_agent_evaluate, sfc_agent_plan,
)
from .alloc import (
    AllocationState, CandidatePath, Infrastructure, ObjectiveWeights, RaReport, WorkloadSchedule,
    aggregate, default_infrastructure,
)
from .errors import AgentNetError
from .netsim import BackgroundSpec, FlowSpec, Scenario, SimTopology, TopologyError
from .reports import ApplicationProfile, DeviceEnvironment, ObservedQos, RuntimeRequirements, TargetQosProfile

KINDS = ("sfc", "cc", "ra")
PLAN_TRANSPORT = {"custom": "llmproto", "legacy-udp": "udp", "legacy-tcp": "tcp"}
RA_SERIES = ("arrival_rate", "cost", "revenue", "green_penalty", "profit", "utilization", "fairness",
             "acceptance_ratio")
HOUR_MIN = 60


class ConfigError(AgentNetError, ValueError):
    pass


class IoFailure(AgentNetError, OSError):
    pass


@dataclass
class ScenarioConfig:
    kind: str
    data: dict
    seed: int
    base_dir: Path = field(default_factory=Path.cwd)
    reasoner: str | None = None
    out: Path | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"experiment kind {self.kind!r} not in {KINDS}")
        if self.seed is None:
            raise ConfigError("a seed is required")
        self.seed = int(self.seed)

    def path(self, key: str) -> Path:
        value = self.data.get(key)
        if value is None:
            raise ConfigError(f"config lacks {key!r}")
        p = Path(value)
        p = p if p.is_absolute() else self.base_dir / p
        if not p.is_file():
            raise ConfigError(f"{key}: file {p} does not exist")
        return p


def load_config(path, seed: int, reasoner: str | None = None, out=None, kind: str | None = None) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    declared = data.get("experiment")
    if kind is not None and declared is not None and declared != kind:
        raise ConfigError(f"{p} describes a {declared} experiment, not {kind}")
    cfg = ScenarioConfig(kind or declared, data, seed, p.parent.resolve(), reasoner, Path(out) if out else None)
    for key in ("topology_file", "infrastructure_file", "script", "control_script"):
        if key in data:
            cfg.path(key)
    return cfg


def make_reasoner(cfg: ScenarioConfig, default_key: str = "script", mode: str | None = None) -> Reasoner:
    mode = mode if mode is not None else cfg.reasoner
    if mode is None:
        return ScriptedReasoner(load_script(cfg.path(default_key)))
    if mode.startswith("scripted:"):
        p = Path(mode[len("scripted:"):])
        if not p.is_file():
            raise ConfigError(f"script {p} does not exist")
        return ScriptedReasoner(load_script(p))
    if mode == "http":
        inner = HttpReasoner()
        if cfg.out is not None:
            cfg.out.mkdir(parents=True, exist_ok=True)
            return RecordingReasoner(inner, cfg.out / f"transcript_{cfg.kind}.jsonl")
        return inner
    raise ConfigError(f"reasoner mode {mode!r}; expected scripted:<path> or http")


@dataclass
class ExperimentResult:
    kind: str
    files: dict[str, str]
    summary: dict


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _r(x, nd: int = 6):
    return None if x is None else round(float(x), nd)


def _pct_change(new: float, base: float) -> float | None:
    return None if base == 0 else 100.0 * (new / base - 1.0)


# shared builders -------------------------------------------------------------------


def _topology(cfg: ScenarioConfig) -> SimTopology:
    if "topology_file" in cfg.data:
        raw = yaml.safe_load(cfg.path("topology_file").read_text(encoding="utf-8"))
    else:
        raw = cfg.data.get("topology")
    if not isinstance(raw, dict):
        raise ConfigError("config needs a topology mapping or topology_file")
    try:
        return SimTopology.from_dict(raw)
    except TopologyError as exc:
        raise ConfigError(f"topology: {exc}") from None


def _backgrounds(cfg: ScenarioConfig) -> list[BackgroundSpec]:
    out = []
    for i, b in enumerate(cfg.data.get("background", []) or []):
        try:
            out.append(BackgroundSpec(**b))
        except TypeError as exc:
            raise ConfigError(f"background[{i}]: {exc}") from None
    return out


def _app_profile(cfg: ScenarioConfig) -> ApplicationProfile:
    a = cfg.data.get("application", {}) or {}
    t = a.get("target", {}) or {}
    return ApplicationProfile(
        app_type=a.get("type", ""),
        qos_metrics=tuple(a.get("qos_metrics", ())),
        qoe_metrics=tuple(a.get("qoe_metrics", ())),
        target=TargetQosProfile(**t),
    )


def _env(cfg: ScenarioConfig) -> DeviceEnvironment:
    return DeviceEnvironment(**(cfg.data.get("environment", {}) or {}))


def _runtime(cfg: ScenarioConfig) -> RuntimeRequirements:
    r = cfg.data.get("runtime", {}) or {}
    return RuntimeRequirements(tuple(r.get("priorities", ())), r.get("guidance", ""))


def _path_links(topo: SimTopology, path) -> list:
    return [topo.link_between(a, b) for a, b in zip(path, path[1:])]


# SFC experiment ---------------------------------------------------------------------


def _ra_report_for(topo: SimTopology, paths) -> RaReport:
    cands = []
    for i, p in enumerate(paths):
        links = _path_links(topo, p)
        cands.append(CandidatePath(
            index=i,
            nodes=tuple(p),
            latency_ms=sum(ln.delay_us for ln in links) / 1000.0,
            free_instances=tuple(int(topo.node_attrs.get(n, {}).get("cpu", 0)) for n in p),
            free_bandwidth_bps=tuple(float(ln.rate_bps) for ln in links),
        ))
    return RaReport(paths[0][0], paths[0][-1], tuple(cands))


def _probe(topo: SimTopology, path) -> ObservedQos:
    """Pre-admission path view: propagation RTT and end-to-end loss."""
    links = _path_links(topo, path)
    deliver = 1.0
    for ln in links:
        deliver *= 1.0 - ln.loss
    rtt_ms = 2 * sum(ln.delay_us for ln in links) / 1000.0
    return ObservedQos(latency_ms=rtt_ms / 2, rtt_ms=rtt_ms, loss=1.0 - deliver,
                       throughput_bps=float(min(ln.rate_bps for ln in links)))


def run_sfc_experiment(cfg: ScenarioConfig, reasoner: Reasoner | None = None) -> ExperimentResult:
    topo = _topology(cfg)
    d = cfg.data
    paths = [tuple(p) for p in d.get("candidate_paths", [])]
    if not paths:
        raise ConfigError("sfc config needs candidate_paths")
    for p in paths:
        try:
            _path_links(topo, p)
        except TopologyError as exc:
            raise ConfigError(f"candidate path {p}: {exc}") from None
    w = d.get("workload", {}) or {}
    catalog = nfs.load_catalog(cfg.path("catalog_file").read_text(encoding="utf-8")) \
        if "catalog_file" in d else nfs.default_catalog()
    ra_report = _ra_report_for(topo, paths)
    ifa = fuse_reports([_probe(topo, paths[0])], _env(cfg), _app_profile(cfg), qoe_text="no session yet",
                       runtime=_runtime(cfg))
    log = DecisionLog()
    reasoner = reasoner or make_reasoner(cfg)
    plan = sfc_agent_plan(ifa, catalog, ra_report, reasoner, topo, log)
    chain = nfs.compose_chain(plan, catalog, topo, paths)
    duration_us = int(float(d.get("duration_s", 2000)) * 1e6)
    flow_kw = dict(src=w.get("src", paths[0][0]), dst=w.get("dst", paths[0][-1]),
                   messages=int(w.get("messages", 10_000)), size=int(w.get("size", 1400)),
                   rate_bps=float(w.get("rate_bps", 1e6)), reliable_fraction=float(w.get("reliable_fraction", 0.5)))
    scenarios = [("tcp-like", "tcp", None), ("udp-like", "udp", None), ("sfc-agent", PLAN_TRANSPORT[plan.protocol], chain)]
    files: dict[str, str] = {}
    rows = {}
    for label, proto, dchain in scenarios:
        scn = Scenario(topo, cfg.seed)
        for bg in _backgrounds(cfg):
            scn.add_background(bg)
        scn.add_flow(FlowSpec("app", protocol=proto, waypoints=chain.waypoints, **flow_kw))
        if dchain is not None:
            dchain.attach(scn.net, ["app"])
        m = scn.run(duration_us)
        files[f"sfc_{label}.csv"] = m.to_csv("app")
        row = m.flows["app"].summary()
        row["duration_s"] = _r(m.duration_s)
        if dchain is not None:
            row["chain"] = [f"{x.descriptor.name}@{x.node}" for x in dchain.nfs]
            ta = next((x.processor for x in dchain.nfs if isinstance(x.processor, nfs.TransportAssistant)), None)
            if ta is not None:
                row["assistant_reemits"] = ta.reemitted
        rows[label] = row
    summary = {"experiment": "sfc", "seed": cfg.seed, "plan_protocol": plan.protocol,
               "path": list(chain.waypoints), "scenarios": rows}
    files["summary.json"] = _dump(summary)
    files["decisions.jsonl"] = log.to_jsonl()
    return ExperimentResult("sfc", files, summary)


# CC experiment -------------------------------------------------------------------------


def _window_samples(rows, lo_s: int, hi_s: int, retrans_ratio: float) -> list[ObservedQos]:
    out = []
    prev_rtt = None
    for t, thr, rtt, loss_pct, cwnd in rows:
        if not lo_s <= t < hi_s:
            continue
        jitter = abs(rtt - prev_rtt) if rtt is not None and prev_rtt is not None else 0.0
        prev_rtt = rtt if rtt is not None else prev_rtt
        out.append(ObservedQos(
            latency_ms=(rtt or 0.0) / 2, jitter_ms=jitter, throughput_bps=thr, loss=loss_pct / 100.0,
            rtt_ms=rtt or 0.0, retransmission_ratio=retrans_ratio,
            cwnd_samples=(round(cwnd, 1),) if cwnd is not None else (),
        ))
    return out


def phase_metrics(rows, lo_s: float, hi_s: float) -> dict:
    sel = [r for r in rows if lo_s <= r[0] < hi_s]
    if not sel:
        return {"seconds": 0}
    cw = [r[4] for r in sel if r[4] is not None]
    rtts = [r[2] for r in sel if r[2] is not None]
    mean_cw = statistics.fmean(cw) if cw else 0.0
    return {
        "seconds": len(sel),
        "start_s": _r(lo_s),
        "end_s": _r(min(hi_s, sel[-1][0] + 1)),
        "throughput_bps": _r(statistics.fmean(r[1] for r in sel), 1),
        "loss_pct": _r(statistics.fmean(r[3] for r in sel)),
        "rtt_ms": _r(statistics.fmean(rtts)) if rtts else None,
        "cwnd_mean": _r(mean_cw),
        "cwnd_cv": _r(statistics.pstdev(cw) / mean_cw) if len(cw) > 1 and mean_cw else None,
    }


def run_cc_experiment(cfg: ScenarioConfig, reasoner: Reasoner | None = None) -> ExperimentResult:
    topo = _topology(cfg)
    d = cfg.data
    f = d.get("flow", {}) or {}
    duration_s = float(d.get("duration_s", 200))
    interval_s = float(d.get("eval_interval_s", 60))
    if interval_s <= 0 or duration_s <= 0:
        raise ConfigError("duration_s and eval_interval_s must be positive")
    registry = cc.default_registry()
    scn = Scenario(topo, cfg.seed, registry)
    for bg in _backgrounds(cfg):
        scn.add_background(bg)
    try:
        flow = scn.add_flow(FlowSpec("app", f.get("src", "src"), f.get("dst", "dst"), "tcp", messages=None,
                                     size=int(f.get("size", 1400)), rate_bps=f.get("rate_bps"),
                                     reliable_fraction=1.0, cc=f.get("cc", "reno")))
    except cc.UnknownScheme as exc:
        raise ConfigError(f"unknown initial scheme {exc}") from None
    rec = scn.recorders["app"]
    reasoner = reasoner or make_reasoner(cfg)
    log = DecisionLog()
    env, app, runtime = _env(cfg), _app_profile(cfg), _runtime(cfg)
    state = {"last_s": 0, "sent": 0, "retx": 0}

    def evaluate(s: Scenario) -> None:
        now_s = s.sim.now // 1_000_000
        sent = flow.high + flow.retransmissions
        dsent = sent - state["sent"]
        ratio = (flow.retransmissions - state["retx"]) / dsent if dsent else 0.0
        samples = _window_samples(rec.rows(now_s - 1), state["last_s"], now_s, ratio)
        state.update(last_s=now_s, sent=sent, retx=flow.retransmissions)
        if not samples:
            return
        ifa = fuse_reports(samples, env, app, qoe_text=f"scheme {flow.conn.scheme.name}", runtime=runtime)
        cc_agent_evaluate(ifa, reasoner, registry, flow.conn, s.sim.now, log)

    k = 1
    while k * interval_s < duration_s:
        scn.at(int(k * interval_s * 1e6), evaluate)
        k += 1
    m = scn.run(int(duration_s * 1e6), stop_when_done=False)
    rows = m.flows["app"].rows
    markers = [mk for mk in flow.conn.markers if mk.old != mk.new or mk.kind == "tune"]
    # the first phase skips the slow-start ramp so its variability is steady-state
    edges = [float(d.get("warmup_s", 5))] + [math.ceil(mk.time_us / 1e6) for mk in markers] + [duration_s]
    names = [flow.conn.markers[0].old if flow.conn.markers else flow.conn.scheme.name] + [mk.new for mk in markers]
    phases = [{"scheme": n, **phase_metrics(rows, lo, hi)} for n, lo, hi in zip(names, edges, edges[1:])]
    bottleneck = float(d.get("bottleneck_bps") or min(ln.rate_bps for ln in _path_links(topo, flow.path)))
    csv_markers = "time_s,old,new,kind\n" + "".join(
        f"{mk.time_us / 1e6:.6f},{mk.old},{mk.new},{mk.kind}\n" for mk in markers)
    summary = {
        "experiment": "cc", "seed": cfg.seed, "bottleneck_bps": bottleneck,
        "phases": phases, "swaps": [{"time_s": _r(mk.time_us / 1e6), "old": mk.old, "new": mk.new,
                                      "kind": mk.kind} for mk in markers],
        "evaluations_s": [e.time_s for e in log],
        "flow": m.flows["app"].summary(),
    }
    files = {"cc_trace.csv": m.to_csv("app"), "cc_markers.csv": csv_markers,
             "decisions.jsonl": log.to_jsonl(), "summary.json": _dump(summary)}
    return ExperimentResult("cc", files, summary)


# RA simulation --------------------------------------------------------------------------


def _infrastructure(cfg: ScenarioConfig) -> Infrastructure:
    if "infrastructure_file" in cfg.data:
        return Infrastructure.from_text(cfg.path("infrastructure_file").read_text(encoding="utf-8"))
    i = cfg.data.get("infrastructure", {}) or {}
    return default_infrastructure(int(i.get("seed", 0)), int(i.get("nodes", 24)), int(i.get("links", 57)),
                                  float(i.get("bandwidth_bps", 10e9)))


def _schedule(cfg: ScenarioConfig) -> WorkloadSchedule:
    s = dict(cfg.data.get("schedule", {}) or {})
    for key in ("bandwidth_bps", "latency_bound_ms"):
        if key in s:
            s[key] = tuple(float(x) for x in s[key])
    try:
        return WorkloadSchedule(**s)
    except TypeError as exc:
        raise ConfigError(f"schedule: {exc}") from None


def simulate_ra(cfg: ScenarioConfig, reasoner: Reasoner) -> tuple[AllocationState, DecisionLog]:
    d = cfg.data
    sched = _schedule(cfg)
    w0 = ObjectiveWeights(*d.get("initial_weights", (0, 1, 0, 0)))
    state = AllocationState(_infrastructure(cfg), sched, cfg.seed, w0, int(d.get("k_paths", 5)))
    step_s = float(d.get("eval_interval_h", 24)) * 3600
    horizon_s = sched.horizon_h * 3600
    log = DecisionLog()
    while state.now < horizon_s - 1e-9:
        state.advance(min(step_s, horizon_s - state.now))
        if state.now < horizon_s - 1e-9:
            window = state.metrics_window(step_s)
            state.set_weights(ra_agent_evaluate(window, state.weights, reasoner, log, state.now))
    state.finalize_series()
    return state, log


def _series_csv(state: AllocationState) -> str:
    lines = ["t_min," + ",".join(RA_SERIES)]
    for m in range(state.minutes):
        lines.append(f"{m}," + ",".join(f"{state.series[k][m]:.6f}" for k in RA_SERIES))
    return "\n".join(lines) + "\n"


def _agg(state: AllocationState, lo_h: float, hi_h: float) -> dict:
    a = aggregate(state.series, int(lo_h * HOUR_MIN), int(hi_h * HOUR_MIN))
    return {k: _r(v) for k, v in a.items()}


def compare_windows(control: AllocationState, agent: AllocationState, lo_h: float, hi_h: float) -> dict:
    a, b = _agg(control, lo_h, hi_h), _agg(agent, lo_h, hi_h)
    keys = ("cost", "revenue", "green_penalty", "profit", "utilization", "fairness", "acceptance_ratio")
    return {"window_h": [lo_h, hi_h], "control": {k: a[k] for k in keys}, "agent": {k: b[k] for k in keys},
            "change_pct": {k: _r(_pct_change(b[k], a[k]), 3) for k in keys}}


def run_ra_sim(cfg: ScenarioConfig, reasoner: Reasoner | None = None,
               control_reasoner: Reasoner | None = None) -> ExperimentResult:
    sched = _schedule(cfg)
    change_h = sched.change_at_h if sched.change_at_h is not None else sched.horizon_h / 2
    step_h = float(cfg.data.get("eval_interval_h", 24))
    agent_state, agent_log = simulate_ra(cfg, reasoner or make_reasoner(cfg))
    # the static control never consults a live reasoner
    control = control_reasoner or ScriptedReasoner(load_script(cfg.path("control_script")))
    control_state, control_log = simulate_ra(cfg, control)
    windows = []
    h = 0.0
    while h < sched.horizon_h:
        windows.append(compare_windows(control_state, agent_state, h, min(h + step_h, sched.horizon_h)))
        h += step_h
    summary = {
        "experiment": "ra", "seed": cfg.seed,
        # the first weight update lands at the end of the first window
        "first_half_after_update": (compare_windows(control_state, agent_state, step_h, change_h)
                                    if step_h < change_h else None),
        "first_half": compare_windows(control_state, agent_state, 0.0, change_h),
        "second_half": compare_windows(control_state, agent_state, change_h, sched.horizon_h),
        "windows": windows,
        "weights_agent": [[_r(t / 3600, 3), list(w.as_tuple())] for t, w in agent_state.weight_history],
        "weights_control": [[_r(t / 3600, 3), list(w.as_tuple())] for t, w in control_state.weight_history],
        "accepted": {"agent": agent_state.accepted, "control": control_state.accepted},
        "rejected": {"agent": agent_state.rejected, "control": control_state.rejected},
    }
    files = {"ra_agent.csv": _series_csv(agent_state), "ra_static.csv": _series_csv(control_state),
             "decisions_agent.jsonl": agent_log.to_jsonl(), "decisions_static.jsonl": control_log.to_jsonl(),
             "summary.json": _dump(summary)}
    return ExperimentResult("ra", files, summary)


RUNNERS = {"sfc": run_sfc_experiment, "cc": run_cc_experiment, "ra": run_ra_sim}


def run_experiment(cfg: ScenarioConfig) -> ExperimentResult:
    return RUNNERS[cfg.kind](cfg)


# outputs ------------------------------------------------------------------------------------


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_outputs(result: ExperimentResult, out_dir) -> list[Path]:
    """Write every file atomically, then a MANIFEST of sha256 digests."""
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name in sorted(result.files):
            p = out / name
            _atomic_write(p, result.files[name])
            written.append(p)
        manifest = "".join(f"{sha256_text(result.files[n])}  {n}\n" for n in sorted(result.files))
        _atomic_write(out / "MANIFEST", manifest)
    except OSError as exc:
        raise IoFailure(f"cannot write outputs under {out}: {exc}") from exc
    written.append(out / "MANIFEST")
    return written


def verify_manifest(out_dir) -> dict[str, bool]:
    out = Path(out_dir)
    status = {}
    for line in (out / "MANIFEST").read_text(encoding="utf-8").splitlines():
        digest, name = line.split("  ", 1)
        p = out / name
        status[name] = p.is_file() and hashlib.sha256(p.read_bytes()).hexdigest() == digest
    return status


def with_overrides(cfg: ScenarioConfig, **updates) -> ScenarioConfig:
    """Copy of ``cfg`` with top-level data keys replaced."""
    data = copy.deepcopy(cfg.data)
    data.update(updates)
    return ScenarioConfig(cfg.kind, data, cfg.seed, cfg.base_dir, cfg.reasoner, cfg.out)
