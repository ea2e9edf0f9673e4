"""IFA fusion, the decision log and the three agent evaluation steps."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .. import cc
from ..alloc.embed import ObjectiveWeights
from ..alloc.paths import RaReport
from ..alloc.sim import MetricsWindow
from ..errors import AgentNetError
from ..nfs import Catalog, NfError, SfcPlan, compose_chain
from ..reports import (
    ApplicationProfile, CcDecision, DeviceEnvironment, IfaReport, ObservedQos, ReportError,
    RuntimeRequirements, UserPerceivedQuality, parse_cc_decision, parse_sfc_plan,
    parse_weight_update, render_ifa_report,
)
from .prompts import CC_TEMPLATE, RA_TEMPLATE, SFC_TEMPLATE, PromptTemplate
from .reasoners import Reasoner, ReasonerError

CC_USER = "Evaluate the flow for the interval that just ended and answer in the output format."
SFC_USER = "Design the chain and protocol for this application and answer in the output format."
RA_USER = "Recommend weights for the next 24 h and answer in the output format."


class AgentError(AgentNetError):
    pass


class NoSamples(AgentError, ValueError):
    pass


class PlanRejected(AgentError, ValueError):
    pass


# decision log --------------------------------------------------------------------


@dataclass(frozen=True)
class LogEntry:
    agent: str
    time_s: float
    tag: str
    ok: bool
    action: str
    detail: dict = field(default_factory=dict)
    rationale: str = ""
    error: str = ""
    raw: str = ""

    def to_dict(self) -> dict:
        return {"agent": self.agent, "time_s": round(float(self.time_s), 6), "tag": self.tag, "ok": self.ok,
                "action": self.action, "detail": self.detail, "rationale": self.rationale,
                "error": self.error, "raw": self.raw}


class DecisionLog:
    """Append-only; its raw responses replay as a scripted reasoner."""

    def __init__(self):
        self._entries: list[LogEntry] = []

    def append(self, entry: LogEntry) -> LogEntry:
        self._entries.append(entry)
        return entry

    @property
    def entries(self) -> tuple[LogEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in self._entries)

    @classmethod
    def from_jsonl(cls, text: str) -> "DecisionLog":
        log = cls()
        for line in text.splitlines():
            if line.strip():
                d = json.loads(line)
                log.append(LogEntry(d["agent"], d["time_s"], d["tag"], d["ok"], d["action"],
                                    d.get("detail", {}), d.get("rationale", ""), d.get("error", ""),
                                    d.get("raw", "")))
        return log

    def script(self) -> list[tuple[str, str]]:
        return [(e.tag, e.raw) for e in self._entries]


def _ask(reasoner: Reasoner, template: PromptTemplate, user: str, **values) -> tuple[str, str]:
    """Returns (raw response, transport error text)."""
    system = template.instantiate(**values)
    try:
        return reasoner.complete(system, user, template.id), ""
    except ReasonerError as exc:
        return "", f"{type(exc).__name__}: {exc}"


# IFA fusion ----------------------------------------------------------------------------


def _mean(xs) -> float:
    xs = list(xs)
    return sum(xs) / len(xs)


def fuse_reports(qos_samples, env_profile: DeviceEnvironment | None = None,
                 app_profile: ApplicationProfile | None = None, qoe_score: float | None = None,
                 qoe_text: str = "", runtime: RuntimeRequirements | None = None) -> IfaReport:
    samples = list(qos_samples)
    if not samples:
        raise NoSamples("no QoS samples in the evaluation window")
    observed = ObservedQos(
        latency_ms=_mean(s.latency_ms for s in samples),
        jitter_ms=_mean(s.jitter_ms for s in samples),
        throughput_bps=_mean(s.throughput_bps for s in samples),
        loss=_mean(s.loss for s in samples),
        rtt_ms=_mean(s.rtt_ms for s in samples),
        retransmission_ratio=_mean(s.retransmission_ratio for s in samples),
        cwnd_samples=tuple(c for s in samples for c in s.cwnd_samples),
    )
    return IfaReport(
        application_profile=app_profile or ApplicationProfile(),
        device_environment=env_profile or DeviceEnvironment(),
        observed_qos=observed,
        user_perceived_quality=UserPerceivedQuality(qoe_text, qoe_score),
        runtime_requirements=runtime or RuntimeRequirements(),
    )


# CC agent -------------------------------------------------------------------------------


def render_schemes(registry: cc.Registry, current: cc.CcScheme | None = None) -> str:
    lines = []
    for name in registry.names():
        s = registry.get(name)
        params = " ".join(f"{k}={v:g}" for k, v in s.params.items()) or "no parameters"
        mark = " (current)" if current is not None and current.name == name else ""
        lines.append(f"- {name}{mark}: {params}")
    if current is not None and current.name not in registry:
        params = " ".join(f"{k}={v:g}" for k, v in current.params.items()) or "no parameters"
        lines.append(f"- {current.name} (current, tuned): {params}")
    return "\n".join(lines)


def _apply_cc(d: CcDecision, registry: cc.Registry, conn: cc.Connection, now_us: int) -> dict:
    if d.action == "keep":
        return {"scheme": conn.scheme.name}
    if d.action == "tune":
        new = conn.scheme.with_params(**d.tuned_params)
        conn.install(new, now_us, kind="tune")
        return {"scheme": new.name, "params": dict(sorted(d.tuned_params.items()))}
    if d.action == "switch":
        old = conn.scheme.name
        conn.swap_scheme(registry, d.target_scheme, now_us)
        return {"from": old, "scheme": d.target_scheme}
    scheme = cc.build_generated_scheme(d.generated_spec)
    if d.generated_spec.name in registry:
        raise cc.DuplicateName(f"scheme {d.generated_spec.name} already exists")
    old = conn.scheme.name
    registry.register(scheme)
    conn.swap_scheme(registry, scheme.name, now_us, kind="generate")
    return {"from": old, "scheme": scheme.name, "params": dict(scheme.params)}


def cc_agent_evaluate(ifa: IfaReport, reasoner: Reasoner, registry: cc.Registry, conn: cc.Connection,
                      now_us: int = 0, log: DecisionLog | None = None,
                      template: PromptTemplate = CC_TEMPLATE) -> CcDecision:
    """One CC evaluation; any failure leaves the connection untouched (keep)."""
    raw, err = _ask(reasoner, template, CC_USER, IFA_REPORT=render_ifa_report(ifa),
                    CC_SCHEMES=render_schemes(registry, conn.scheme))
    decision = CcDecision("keep")
    detail: dict = {"scheme": conn.scheme.name}
    ok = False
    if not err:
        try:
            parsed = parse_cc_decision(raw)
            detail = _apply_cc(parsed, registry, conn, now_us)
            decision, ok = parsed, True
        except (ReportError, cc.CcError) as exc:
            err = f"{type(exc).__name__}: {exc}"
            detail = {"scheme": conn.scheme.name}
    if log is not None:
        log.append(LogEntry("cc", now_us / 1e6, template.id, ok, decision.action, detail,
                            decision.rationale, err, raw))
    return decision


# RA agent ------------------------------------------------------------------------------


def render_stats(window: MetricsWindow) -> str:
    a = window.aggregates
    return "\n".join([
        f"Window: {window.start_min / 60:.1f} h to {window.end_min / 60:.1f} h",
        f"Arrival rate: {a['arrival_rate']:.2f} SFC/min",
        f"Acceptance: {100 * a['acceptance_ratio']:.1f}%",
        f"Operational cost: {a['cost']:.1f} per min",
        f"Revenue: {a['revenue']:.1f} per min",
        f"Green penalty: {a['green_penalty']:.1f} per min",
        f"Profit: {a['profit']:.1f} per min",
        f"Utilization: {100 * a['utilization']:.1f}%",
        f"Fairness (Jain): {a['fairness']:.3f}",
    ])


def ra_agent_evaluate(window: MetricsWindow, current: ObjectiveWeights, reasoner: Reasoner,
                      log: DecisionLog | None = None, now_s: float | None = None,
                      template: PromptTemplate = RA_TEMPLATE) -> ObjectiveWeights:
    """One RA evaluation; malformed answers keep ``current``."""
    raw, err = _ask(reasoner, template, RA_USER, CURRENT_WEIGHTS=current.render(), STATS_24H=render_stats(window))
    weights, rationale, ok = current, "", False
    if not err:
        try:
            update = parse_weight_update(raw)
            weights, rationale, ok = update.weights, update.rationale, True
        except (ReportError, ValueError) as exc:
            err = f"{type(exc).__name__}: {exc}"
    if log is not None:
        t = now_s if now_s is not None else window.end_min * 60.0
        log.append(LogEntry("ra", t, template.id, ok, "update" if ok else "retain",
                            {"weights": list(weights.as_tuple())}, rationale, err, raw))
    return weights


# SFC agent --------------------------------------------------------------------------------


def validate_plan(plan: SfcPlan, catalog: Catalog, ra_report: RaReport, topology=None) -> None:
    paths = ra_report.node_paths()
    for e in plan.ordered():
        if e.new_nf is None and e.name not in catalog:
            raise PlanRejected(f"NF {e.name!r} is neither in the catalog nor defined by the plan")
    if plan.path_index is not None and not 0 <= plan.path_index < len(paths):
        raise PlanRejected(f"path index {plan.path_index} outside the {len(paths)} candidate paths")
    if topology is not None:
        try:
            compose_chain(plan, catalog, topology, paths)
        except NfError as exc:
            raise PlanRejected(f"{type(exc).__name__}: {exc}") from None
        return
    nodes = [e.node for e in plan.ordered()]
    candidates = [paths[plan.path_index]] if plan.path_index is not None else paths
    for p in candidates:
        idx = 0
        for n in nodes:
            if n not in p[idx:]:
                break
            idx = p.index(n, idx)
        else:
            return
    raise PlanRejected(f"placement {nodes} does not follow a candidate path")


def sfc_agent_plan(ifa: IfaReport, catalog: Catalog, ra_report: RaReport, reasoner: Reasoner,
                   topology=None, log: DecisionLog | None = None, now_s: float = 0.0,
                   template: PromptTemplate = SFC_TEMPLATE) -> SfcPlan:
    """Ask for a plan and validate it; there is no fallback, failures raise PlanRejected."""
    if not ra_report.paths:
        raise PlanRejected("RA report holds no candidate path")
    raw, err = _ask(reasoner, template, SFC_USER, IFA_REPORT=render_ifa_report(ifa),
                    NF_CATALOG=catalog.render(), RA_REPORT=ra_report.render())
    plan = None
    if not err:
        try:
            plan = parse_sfc_plan(raw)
            validate_plan(plan, catalog, ra_report, topology)
        except (ReportError, PlanRejected) as exc:
            err = f"{type(exc).__name__}: {exc}"
    if log is not None:
        detail = {}
        if plan is not None and not err:
            detail = {"protocol": plan.protocol, "path": plan.path_index,
                      "chain": [f"{e.name}@{e.node}" for e in plan.ordered()]}
        log.append(LogEntry("sfc", now_s, template.id, not err, "admit" if not err else "reject",
                            detail, plan.notes if plan is not None and not err else "", err, raw))
    if err:
        raise PlanRejected(err)
    return plan
