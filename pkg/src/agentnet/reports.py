"""IFA reports, agent decision documents, and their text contracts.

Decision text contract:

* CC: a ``DECISION: <a|b|c|d>`` line (a keep, b tune, c switch, d generate),
  optional ``SCHEME:``, ``PARAMS: k=v ...``, ``RATIONALE:`` and ``STEP n:``
  lines, and for ``d`` a fenced ``ccspec`` block.
* RA: a ``WEIGHTS: a1=<f> a2=<f> a3=<f> a4=<f>`` line plus optional
  ``RATIONALE:`` / ``STEP n:`` lines.
* SFC: a fenced ``sfcplan`` block (grammar in :func:`parse_plan_block`).

Fenced blocks open with a line of three backticks followed by the tag and
close with a line holding only three backticks.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .alloc.embed import NegativeWeight, ObjectiveWeights, ZeroWeights
from .cc import GeneratedCcSpec, SpecOutOfBounds
from .errors import AgentNetError
from .nfs import ChainEntry, MalformedEntry, NfDescriptor, SfcPlan

SECTIONS = (
    "Application Profile",
    "Device and Environment",
    "Observed QoS Metrics",
    "User-Perceived Quality",
    "Runtime Requirements",
)
ACTIONS = {"a": "keep", "b": "tune", "c": "switch", "d": "generate"}
ACTION_LETTER = {v: k for k, v in ACTIONS.items()}
PLAN_PROTOCOLS = ("legacy-udp", "legacy-tcp", "custom")
CCSPEC_KEYS = ("name", "additive_increase", "beta", "rtt_threshold", "pacing_gain", "rtt_sensitivity")


class ReportError(AgentNetError, ValueError):
    pass


class MissingDecisionLine(ReportError):
    pass


class UnknownAction(ReportError):
    pass


class MalformedGeneratedSpec(ReportError):
    pass


class MissingWeightsLine(ReportError):
    pass


class NonNumericWeight(ReportError):
    pass


class MissingPlanBlock(ReportError):
    pass


class DuplicateChainPosition(ReportError):
    pass


class UnknownProtocolKind(ReportError):
    pass


class MalformedPlan(ReportError):
    pass


# IFA report --------------------------------------------------------------------


@dataclass(frozen=True)
class TargetQosProfile:
    max_latency_ms: float = 100.0
    min_throughput_bps: float = 1_000_000.0
    max_loss_ratio: float = 0.0
    max_jitter_ms: float = 30.0

    def __post_init__(self):
        vals = (self.max_latency_ms, self.min_throughput_bps, self.max_loss_ratio, self.max_jitter_ms)
        if min(vals) < 0 or self.max_loss_ratio > 1:
            raise ReportError("target QoS values must be non-negative with loss ratio <= 1")


@dataclass(frozen=True)
class ApplicationProfile:
    app_type: str = ""
    qos_metrics: tuple[str, ...] = ()
    qoe_metrics: tuple[str, ...] = ()
    target: TargetQosProfile = field(default_factory=TargetQosProfile)


@dataclass(frozen=True)
class DeviceEnvironment:
    network_technology: str = ""
    mobility: str = ""
    device: str = ""
    os: str = ""
    competing_flows: int = 0


@dataclass(frozen=True)
class ObservedQos:
    latency_ms: float = 0.0
    jitter_ms: float = 0.0
    throughput_bps: float = 0.0
    loss: float = 0.0
    rtt_ms: float = 0.0
    retransmission_ratio: float = 0.0
    cwnd_samples: tuple[float, ...] = ()

    def __post_init__(self):
        vals = (self.latency_ms, self.jitter_ms, self.throughput_bps, self.loss, self.rtt_ms,
                self.retransmission_ratio, *self.cwnd_samples)
        if any(v < 0 for v in vals):
            raise ReportError("observed QoS values must be non-negative")


@dataclass(frozen=True)
class UserPerceivedQuality:
    text: str = ""
    score: float | None = None

    def __post_init__(self):
        if self.score is not None and not 0 <= self.score <= 1:
            raise ReportError("QoE score must lie in [0, 1]")


@dataclass(frozen=True)
class RuntimeRequirements:
    priorities: tuple[str, ...] = ()
    guidance: str = ""


@dataclass(frozen=True)
class IfaReport:
    application_profile: ApplicationProfile = field(default_factory=ApplicationProfile)
    device_environment: DeviceEnvironment = field(default_factory=DeviceEnvironment)
    observed_qos: ObservedQos = field(default_factory=ObservedQos)
    user_perceived_quality: UserPerceivedQuality = field(default_factory=UserPerceivedQuality)
    runtime_requirements: RuntimeRequirements = field(default_factory=RuntimeRequirements)


def _line(text: str) -> str:
    # one physical line, so body text can never open a new section
    text = " ".join(str(text).split())
    return text or "n/a"


def _list(items) -> str:
    return ", ".join(str(i) for i in items) if items else "n/a"


def _g(x: float) -> str:
    return f"{x:.1f}"


def render_ifa_report(report: IfaReport) -> str:
    ap = report.application_profile
    t = ap.target
    env = report.device_environment
    q = report.observed_qos
    uq = report.user_perceived_quality
    rt = report.runtime_requirements
    blocks = [
        [
            f"Application type: {_line(ap.app_type)}",
            f"QoS metrics: {_list(ap.qos_metrics)}",
            f"QoE metrics: {_list(ap.qoe_metrics)}",
            f"Target latency: <= {_g(t.max_latency_ms)} ms",
            f"Target throughput: >= {t.min_throughput_bps:.0f} bps",
            f"Target loss: <= {100 * t.max_loss_ratio:.1f}%",
            f"Target jitter: <= {_g(t.max_jitter_ms)} ms",
        ],
        [
            f"Network technology: {_line(env.network_technology)}",
            f"Mobility: {_line(env.mobility)}",
            f"Device: {_line(env.device)}",
            f"OS: {_line(env.os)}",
            f"Competing flows: {env.competing_flows}",
        ],
        [
            f"Latency: {_g(q.latency_ms)} ms",
            f"Jitter: {_g(q.jitter_ms)} ms",
            f"Throughput: {q.throughput_bps:.0f} bps",
            f"Loss: {100 * q.loss:.1f}%",
            f"RTT: {_g(q.rtt_ms)} ms",
            f"Retransmissions: {100 * q.retransmission_ratio:.1f}%",
            f"CWND samples: {_list(_g(c) for c in q.cwnd_samples) if q.cwnd_samples else 'n/a'}",
        ],
        [
            _line(uq.text),
            f"Score: {uq.score:.2f}" if uq.score is not None else "Score: n/a",
        ],
        [
            f"Priorities: {_list(rt.priorities)}",
            f"Guidance: {_line(rt.guidance)}",
        ],
    ]
    out = []
    for title, body in zip(SECTIONS, blocks):
        out.append(f"# {title}")
        out.extend(body)
        out.append("")
    return "\n".join(out)


def split_sections(text: str) -> dict[str, str]:
    """Inverse of the section layout: header title -> body text."""
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        if line.startswith("# "):
            current = line[2:].strip()
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    return {k: "\n".join(v).strip() for k, v in sections.items()}


# fenced blocks ------------------------------------------------------------------


def extract_block(text: str, tag: str) -> str | None:
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if line.strip() == f"```{tag}":
            for j in range(i + 1, len(lines)):
                if lines[j].strip() == "```":
                    return "\n".join(lines[i + 1:j])
            return None
    return None


def _kv_lines(body: str) -> list[tuple[str, str]]:
    out = []
    for raw in body.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out.append((k.strip(), v.strip()))
    return out


def _scalar(v: str):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        f = float(v)
    except ValueError:
        return v
    return f if math.isfinite(f) else v


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


# CC decisions ------------------------------------------------------------------------


@dataclass(frozen=True)
class CcDecision:
    action: str
    tuned_params: dict = field(default_factory=dict)
    target_scheme: str | None = None
    generated_spec: GeneratedCcSpec | None = None
    rationale: str = ""
    step_summaries: tuple[str, ...] = ()

    def __post_init__(self):
        if self.action not in ACTION_LETTER:
            raise UnknownAction(f"action {self.action!r}")
        if (self.action == "tune") != bool(self.tuned_params):
            raise ReportError("tuned_params belong to, and are required by, the tune action")
        if (self.action == "switch") != (self.target_scheme is not None):
            raise ReportError("target_scheme belongs to, and is required by, the switch action")
        if (self.action == "generate") != (self.generated_spec is not None):
            raise ReportError("generated_spec belongs to, and is required by, the generate action")


def render_ccspec(spec: GeneratedCcSpec) -> str:
    return "\n".join(f"{k}={_fmt(getattr(spec, k))}" for k in CCSPEC_KEYS)


def parse_ccspec(body: str) -> GeneratedCcSpec:
    try:
        pairs = dict(_kv_lines(body))
    except ValueError as exc:
        raise MalformedGeneratedSpec(str(exc)) from None
    unknown = set(pairs) - set(CCSPEC_KEYS)
    if unknown:
        raise MalformedGeneratedSpec(f"unknown ccspec keys {sorted(unknown)}")
    if "name" not in pairs:
        raise MalformedGeneratedSpec("ccspec without name=")
    kwargs: dict = {"name": pairs.pop("name")}
    for k, v in pairs.items():
        try:
            kwargs[k] = float(v)
        except ValueError:
            raise MalformedGeneratedSpec(f"{k}={v!r} is not a number") from None
        if not math.isfinite(kwargs[k]):
            raise MalformedGeneratedSpec(f"{k}={v!r} is not finite")
    try:
        return GeneratedCcSpec(**kwargs)
    except SpecOutOfBounds as exc:
        raise MalformedGeneratedSpec(f"ccspec out of bounds: {exc}") from None


_STEP = re.compile(r"^STEP\s+(\d+)\s*:\s*(.*)$")


def _steps_and_rationale(lines: list[str]) -> tuple[tuple[str, ...], str]:
    steps: dict[int, str] = {}
    rationale = ""
    for line in lines:
        m = _STEP.match(line)
        if m:
            steps.setdefault(int(m.group(1)), m.group(2).strip())
        elif line.startswith("RATIONALE:") and not rationale:
            rationale = line[len("RATIONALE:"):].strip()
    return tuple(steps[k] for k in sorted(steps)), rationale


def parse_cc_decision(text: str) -> CcDecision:
    lines = [ln.strip() for ln in str(text).splitlines()]
    decision = next((ln for ln in lines if ln.startswith("DECISION:")), None)
    if decision is None:
        raise MissingDecisionLine("no line starting with 'DECISION:'")
    letter = decision[len("DECISION:"):].strip().lower()
    letter = letter.split()[0].strip("().:") if letter else ""
    if letter not in ACTIONS:
        raise UnknownAction(f"unknown decision {decision!r}")
    action = ACTIONS[letter]
    steps, rationale = _steps_and_rationale(lines)
    params: dict = {}
    scheme = None
    spec = None
    if action == "tune":
        line = next((ln for ln in lines if ln.startswith("PARAMS:")), None)
        if line is None:
            raise MalformedGeneratedSpec("tune decision without a PARAMS: line")
        for tok in line[len("PARAMS:"):].split():
            if "=" not in tok:
                raise MalformedGeneratedSpec(f"bad PARAMS token {tok!r}")
            k, v = tok.split("=", 1)
            try:
                params[k] = float(v)
            except ValueError:
                raise MalformedGeneratedSpec(f"PARAMS {tok!r} is not numeric") from None
        if not params:
            raise MalformedGeneratedSpec("tune decision with empty PARAMS")
    elif action == "switch":
        line = next((ln for ln in lines if ln.startswith("SCHEME:")), None)
        if line is None or not line[len("SCHEME:"):].strip():
            raise MalformedGeneratedSpec("switch decision without a SCHEME: line")
        scheme = line[len("SCHEME:"):].strip().split()[0]
    elif action == "generate":
        body = extract_block(str(text), "ccspec")
        if body is None:
            raise MalformedGeneratedSpec("generate decision without a ccspec block")
        spec = parse_ccspec(body)
    return CcDecision(action, params, scheme, spec, rationale, steps)


def render_cc_decision(d: CcDecision) -> str:
    out = [f"DECISION: {ACTION_LETTER[d.action]}"]
    if d.action == "tune":
        out.append("PARAMS: " + " ".join(f"{k}={_fmt(float(v))}" for k, v in d.tuned_params.items()))
    if d.action == "switch":
        out.append(f"SCHEME: {d.target_scheme}")
    if d.rationale:
        out.append(f"RATIONALE: {_line(d.rationale)}")
    for i, s in enumerate(d.step_summaries, 1):
        out.append(f"STEP {i}: {_line(s)}")
    if d.action == "generate":
        out += ["```ccspec", render_ccspec(d.generated_spec), "```"]
    return "\n".join(out) + "\n"


# RA weight updates -----------------------------------------------------------------------


@dataclass(frozen=True)
class WeightUpdate:
    weights: ObjectiveWeights
    rationale: str = ""
    step_summaries: tuple[str, ...] = ()


def parse_weight_update(text: str) -> WeightUpdate:
    lines = [ln.strip() for ln in str(text).splitlines()]
    line = next((ln for ln in lines if ln.startswith("WEIGHTS:")), None)
    if line is None:
        raise MissingWeightsLine("no line starting with 'WEIGHTS:'")
    values: dict[str, float] = {}
    for tok in line[len("WEIGHTS:"):].split():
        if "=" not in tok:
            raise NonNumericWeight(f"bad weight token {tok!r}")
        k, v = tok.split("=", 1)
        k = k.strip().lower()
        try:
            x = float(v)
        except ValueError:
            raise NonNumericWeight(f"{tok!r} is not numeric") from None
        if not math.isfinite(x):
            raise NonNumericWeight(f"{tok!r} is not finite")
        values[k] = x
    missing = [k for k in ("a1", "a2", "a3", "a4") if k not in values]
    if missing:
        raise MissingWeightsLine(f"WEIGHTS line lacks {', '.join(missing)}")
    try:
        weights = ObjectiveWeights(values["a1"], values["a2"], values["a3"], values["a4"])
    except ZeroWeights as exc:
        raise NonNumericWeight(str(exc)) from None
    steps, rationale = _steps_and_rationale(lines)
    return WeightUpdate(weights, rationale, steps)


def render_weight_update(u: WeightUpdate) -> str:
    w = u.weights
    out = [f"WEIGHTS: a1={w.a1!r} a2={w.a2!r} a3={w.a3!r} a4={w.a4!r}"]
    if u.rationale:
        out.append(f"RATIONALE: {_line(u.rationale)}")
    for i, s in enumerate(u.step_summaries, 1):
        out.append(f"STEP {i}: {_line(s)}")
    return "\n".join(out) + "\n"


# SFC plans ------------------------------------------------------------------------------


def _nf_value(value: str) -> tuple[str, str, dict]:
    """``<Name> @ <node> [| k=v ...]``"""
    config: dict = {}
    if "|" in value:
        value, opts = value.split("|", 1)
        for tok in opts.split():
            if "=" not in tok:
                raise MalformedPlan(f"bad NF option {tok!r}")
            k, v = tok.split("=", 1)
            config[k] = _scalar(v)
    if "@" not in value:
        raise MalformedPlan(f"NF entry {value!r} lacks '@ <node>'")
    name, node = value.rsplit("@", 1)
    name, node = name.strip(), node.strip()
    if not name or not node:
        raise MalformedPlan(f"NF entry {value!r} needs a name and a node")
    return name, node, config


def _new_nf(name: str, value: str) -> NfDescriptor:
    fields = {}
    for tok in value.split():
        if "=" not in tok:
            raise MalformedPlan(f"bad new-NF token {tok!r}")
        k, v = tok.split("=", 1)
        fields[k] = v
    try:
        return NfDescriptor(
            name=name,
            role=fields.get("role", "generated NF").replace("_", " "),
            input_formats=tuple(fields.get("in", "").split(",")) if fields.get("in") else (),
            output_formats=tuple(fields.get("out", "").split(",")) if fields.get("out") else (),
            platform=fields.get("platform", "linux-userspace"),
            cpu=float(fields.get("cpu", 1)),
            mem_mb=float(fields.get("mem", 128)),
            behavior=fields.get("behavior", "forward"),
        )
    except (MalformedEntry, ValueError) as exc:
        raise MalformedPlan(f"new NF {name}: {exc}") from None


def parse_plan_block(body: str) -> SfcPlan:
    """Grammar, one ``key=value`` per line::

        protocol=legacy-udp|legacy-tcp|custom
        path=<candidate index>              (optional)
        nf.<pos>=<Name> @ <node> | k=v ...  (config optional)
        newnf.<Name>=behavior=... in=fmt,.. out=fmt,.. cpu=.. mem=..
        notes=<free text>
    """
    try:
        pairs = _kv_lines(body)
    except ValueError as exc:
        raise MalformedPlan(str(exc)) from None
    protocol = None
    path_index = None
    notes = []
    raw_chain: dict[int, tuple[str, str, dict]] = {}
    new_nfs: dict[str, NfDescriptor] = {}
    for key, value in pairs:
        if key == "protocol":
            if value not in PLAN_PROTOCOLS:
                raise UnknownProtocolKind(f"protocol {value!r} not in {PLAN_PROTOCOLS}")
            protocol = value
        elif key == "path":
            try:
                path_index = int(value)
            except ValueError:
                raise MalformedPlan(f"path={value!r} is not an index") from None
        elif key == "notes":
            notes.append(value)
        elif key.startswith("nf."):
            try:
                pos = int(key[3:])
            except ValueError:
                raise MalformedPlan(f"bad chain position in {key!r}") from None
            if pos in raw_chain:
                raise DuplicateChainPosition(f"position {pos} assigned twice")
            raw_chain[pos] = _nf_value(value)
        elif key.startswith("newnf."):
            name = key[len("newnf."):].strip()
            new_nfs[name] = _new_nf(name, value)
        # unknown keys are tolerated
    if protocol is None:
        raise UnknownProtocolKind("plan block without protocol=")
    chain = []
    for pos in sorted(raw_chain):
        name, node, config = raw_chain[pos]
        chain.append(ChainEntry(pos, name, node, config, new_nfs.get(name)))
    return SfcPlan(chain, protocol, path_index, " ".join(notes))


def parse_sfc_plan(text: str) -> SfcPlan:
    body = extract_block(str(text), "sfcplan")
    if body is None:
        raise MissingPlanBlock("no ```sfcplan block found")
    return parse_plan_block(body)


def render_sfc_plan(plan: SfcPlan) -> str:
    out = ["```sfcplan", f"protocol={plan.protocol}"]
    if plan.path_index is not None:
        out.append(f"path={plan.path_index}")
    for e in plan.ordered():
        opts = " ".join(f"{k}={_fmt(v)}" for k, v in e.config.items())
        out.append(f"nf.{e.position}={e.name} @ {e.node}" + (f" | {opts}" if opts else ""))
    for e in plan.ordered():
        d = e.new_nf
        if d is not None:
            out.append(
                f"newnf.{d.name}=behavior={d.behavior} in={','.join(d.input_formats)} "
                f"out={','.join(d.output_formats)} cpu={d.cpu:g} mem={d.mem_mb:g} "
                f"role={d.role.replace(' ', '_')}"
            )
    if plan.notes:
        out.append(f"notes={_line(plan.notes)}")
    out.append("```")
    return "\n".join(out) + "\n"


__all__ = [
    "ApplicationProfile", "CcDecision", "DeviceEnvironment", "DuplicateChainPosition", "IfaReport",
    "MalformedGeneratedSpec", "MalformedPlan", "MissingDecisionLine", "MissingPlanBlock",
    "MissingWeightsLine", "NegativeWeight", "NonNumericWeight", "ObservedQos", "ReportError",
    "RuntimeRequirements", "SECTIONS", "TargetQosProfile", "UnknownAction", "UnknownProtocolKind",
    "UserPerceivedQuality", "WeightUpdate", "extract_block", "parse_cc_decision", "parse_ccspec",
    "parse_plan_block", "parse_sfc_plan", "parse_weight_update", "render_cc_decision", "render_ccspec",
    "render_ifa_report", "render_sfc_plan", "render_weight_update", "split_sections",
]
