import json
import threading
from pathlib import Path
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from agentnet import cc
from agentnet.agents import (
    CC_TEMPLATE, RA_TEMPLATE, SFC_TEMPLATE, TEMPLATES, DecisionLog, HttpReasoner, MissingValue, NoSamples,
    PlanRejected, PromptTemplate, ReasonerUnavailable, RecordingReasoner, ScriptedReasoner, ScriptExhausted,
    TemplateError, UndeclaredPlaceholder, cc_agent_evaluate, fuse_reports, load_script, ra_agent_evaluate,
    sfc_agent_plan, transcript_script,
)
from agentnet.alloc import AllocationState, CandidatePath, ObjectiveWeights, RaReport, WorkloadSchedule
from agentnet.alloc import default_infrastructure
from agentnet.cli import default_config
from agentnet.nfs import default_catalog
from agentnet.reports import SECTIONS, IfaReport, ObservedQos, split_sections

from test_nfs import PATHS, chain_topology

GEN = """DECISION: d
RATIONALE: a delay-aware variant suits the lossy path
STEP 1: targets
```ccspec
name=llm_cc_v1
additive_increase=2.0
beta=0.7
rtt_threshold=1.5
pacing_gain=1.0
rtt_sensitivity=0.3
```
"""


def test_templates_are_total():
    values = {p: f"<{p}>" for p in ("IFA_REPORT", "CC_SCHEMES", "NF_CATALOG", "RA_REPORT",
                                    "CURRENT_WEIGHTS", "STATS_24H")}
    for tpl, steps in ((CC_TEMPLATE, 8), (SFC_TEMPLATE, 9), (RA_TEMPLATE, 3)):
        assert tpl.steps == steps and TEMPLATES[tpl.id] is tpl
        text = tpl.instantiate(**{p: values[p] for p in tpl.placeholders})
        assert "{" not in text and "}" not in text
        for p in tpl.placeholders:
            assert values[p] in text
        with pytest.raises(MissingValue):
            tpl.instantiate()


def test_inserted_braces_are_neutralized():
    text = RA_TEMPLATE.instantiate(CURRENT_WEIGHTS="{IFA_REPORT}", STATS_24H="x")
    assert "{" not in text and "(IFA_REPORT)" in text


def test_template_validation():
    with pytest.raises(UndeclaredPlaceholder):
        PromptTemplate("t", "STEP 1 do {THING}", 1, ())
    with pytest.raises(TemplateError):
        PromptTemplate("t", "STEP 1 do", 2, ())
    with pytest.raises(TemplateError):
        PromptTemplate("t", "STEP 1 a { b", 1, ())


def test_fuse_reports_means():
    ifa = fuse_reports([ObservedQos(latency_ms=10, loss=0.1, cwnd_samples=(1.0,)),
                        ObservedQos(latency_ms=30, loss=0.3, cwnd_samples=(2.0, 3.0))], qoe_score=0.5)
    assert ifa.observed_qos.latency_ms == 20 and ifa.observed_qos.loss == pytest.approx(0.2)
    assert ifa.observed_qos.cwnd_samples == (1.0, 2.0, 3.0)
    assert ifa.user_perceived_quality.score == 0.5
    with pytest.raises(NoSamples):
        fuse_reports([])


def _conn():
    return cc.default_registry(), cc.Connection(cc.reno())


def test_cc_generate_registers_and_swaps():
    reg, conn = _conn()
    log = DecisionLog()
    d = cc_agent_evaluate(IfaReport(), ScriptedReasoner([("cc-agent", GEN)]), reg, conn, 60_000_000, log)
    assert d.action == "generate" and "llm_cc_v1" in reg and conn.scheme.name == "llm_cc_v1"
    assert conn.markers[-1].kind == "generate" and log.entries[0].ok
    # a second identical generate is a duplicate: fail-safe keep
    d2 = cc_agent_evaluate(IfaReport(), ScriptedReasoner([("cc-agent", GEN)]), reg, conn, 1, log)
    assert d2.action == "keep" and "DuplicateName" in log.entries[1].error


def test_cc_keep_tune_switch():
    reg, conn = _conn()
    assert cc_agent_evaluate(IfaReport(), ScriptedReasoner([("*", "DECISION: a")]), reg, conn).action == "keep"
    assert conn.markers == []
    cc_agent_evaluate(IfaReport(), ScriptedReasoner([("*", "DECISION: b\nPARAMS: beta=0.8")]), reg, conn)
    assert conn.scheme.params == {"beta": 0.8}
    cc_agent_evaluate(IfaReport(), ScriptedReasoner([("*", "DECISION: c\nSCHEME: vegas_lite")]), reg, conn)
    assert conn.scheme.name == "vegas_lite"


@pytest.mark.parametrize("raw", ["nonsense", "DECISION: c\nSCHEME: bbr", "DECISION: b\nPARAMS: zeta=1",
                                 GEN.replace("beta=0.7", "beta=1.7")])
def test_cc_malformed_keeps_and_logs(raw):
    reg, conn = _conn()
    state = (conn.state.cwnd, conn.state.ssthresh)
    log = DecisionLog()
    d = cc_agent_evaluate(IfaReport(), ScriptedReasoner([("*", raw)]), reg, conn, 0, log)
    assert d.action == "keep" and conn.scheme.name == "reno" and conn.markers == []
    assert (conn.state.cwnd, conn.state.ssthresh) == state
    assert not log.entries[0].ok and log.entries[0].error and log.entries[0].raw == raw


def test_cc_prompt_contains_report():
    seen = {}

    class Spy(ScriptedReasoner):
        def complete(self, system_text, user_text, tag=""):
            seen["system"] = system_text
            return super().complete(system_text, user_text, tag)

    reg, conn = _conn()
    cc_agent_evaluate(IfaReport(observed_qos=ObservedQos(loss=0.08)), Spy([("*", "DECISION: a")]), reg, conn)
    assert "Loss: 8.0%" in seen["system"] and "reno (current)" in seen["system"]
    for title in SECTIONS:
        assert f"# {title}" in seen["system"]


def _window():
    state = AllocationState(default_infrastructure(0), WorkloadSchedule(change_at_h=None, horizon_h=48,
                                                                        lifetime_mean_s=600), seed=0)
    state.advance(86_400)
    return state.metrics_window()


def test_ra_update_and_fail_safe():
    w = _window()
    cur = ObjectiveWeights(0, 1, 0, 0)
    log = DecisionLog()
    new = ra_agent_evaluate(w, cur, ScriptedReasoner([("ra-agent", "WEIGHTS: a1=0 a2=0.4 a3=0 a4=0.6")]), log)
    assert new.as_tuple() == pytest.approx((0, 0.4, 0, 0.6))
    assert log.entries[-1].action == "update"
    for raw in ("no weights", "WEIGHTS: a1=-1 a2=1 a3=0 a4=0", "WEIGHTS: a1=x a2=1 a3=1 a4=1"):
        assert ra_agent_evaluate(w, cur, ScriptedReasoner([("*", raw)]), log) is cur
        assert log.entries[-1].action == "retain" and not log.entries[-1].ok
    assert ra_agent_evaluate(w, cur, ScriptedReasoner([]), log) is cur
    assert "ScriptExhausted" in log.entries[-1].error


def _ra_report():
    return RaReport("h1", "h2", tuple(CandidatePath(i, p, float(i + 1), tuple(4 for _ in p),
                                                    tuple(1e9 for _ in p[1:])) for i, p in enumerate(PATHS)))


def _plan_text(body):
    return f"```sfcplan\n{body}\n```\nSTEP 1: x"


def test_sfc_valid_plan():
    log = DecisionLog()
    raw = load_script(Path(default_config("sfc")).parent / "scripts" / "sfc_agent.yaml")
    plan = sfc_agent_plan(IfaReport(), default_catalog(), _ra_report(), ScriptedReasoner(raw),
                          topology=chain_topology(), log=log)
    assert plan.protocol == "custom" and [e.name for e in plan.ordered()] == [
        "QoS Enforcer", "Transport Assistant", "Packet Forwarder"]
    assert log.entries[0].action == "admit"


def test_sfc_rejections():
    topo, cat, rep = chain_topology(), default_catalog(), _ra_report()
    bad = [
        "protocol=custom\npath=0\nnf.1=QoS Enforcer @ x",              # off the chosen path
        "protocol=custom\nnf.1=Teleporter @ n1",                        # not in the catalog
        "protocol=legacy-udp\nnf.1=Transport Assistant @ n1",           # format mismatch
        "protocol=custom\npath=7",                                     # no such candidate
    ]
    for body in bad:
        log = DecisionLog()
        with pytest.raises(PlanRejected):
            sfc_agent_plan(IfaReport(), cat, rep, ScriptedReasoner([("*", _plan_text(body))]), topo, log)
        assert log.entries[0].action == "reject"
    with pytest.raises(PlanRejected):
        sfc_agent_plan(IfaReport(), cat, RaReport("h1", "h2", ()), ScriptedReasoner([("*", "x")]))


def test_sfc_legacy_empty_chain():
    plan = sfc_agent_plan(IfaReport(), default_catalog(), _ra_report(),
                          ScriptedReasoner([("*", _plan_text("protocol=legacy-udp"))]), chain_topology())
    assert plan.protocol == "legacy-udp" and plan.chain == []


def test_sfc_new_nf_accepted():
    body = ("protocol=custom\npath=0\nnf.1=Jitter Buffer @ n2\n"
            "newnf.Jitter Buffer=behavior=forward in=llmproto out=llmproto cpu=1 mem=64 role=smooths_arrivals")
    plan = sfc_agent_plan(IfaReport(), default_catalog(), _ra_report(),
                          ScriptedReasoner([("*", _plan_text(body))]), chain_topology())
    assert plan.chain[0].new_nf.role == "smooths arrivals"


def test_scripted_reasoner_exhaustion_and_tags():
    r = ScriptedReasoner([("a", "1"), ("*", "any"), ("a", "2")])
    assert [r.complete("", "", "a"), r.complete("", "", "a"), r.complete("", "", "b")] == ["1", "2", "any"]
    with pytest.raises(ScriptExhausted):
        r.complete("", "", "a")


def test_record_then_replay_is_identical(tmp_path):
    path = tmp_path / "t.jsonl"
    rec = RecordingReasoner(ScriptedReasoner([("cc-agent", GEN), ("cc-agent", "DECISION: a")]), path)
    reg1, c1 = _conn()
    log1 = DecisionLog()
    for t in (1, 2):
        cc_agent_evaluate(IfaReport(), rec, reg1, c1, t, log1)
    reg2, c2 = _conn()
    log2 = DecisionLog()
    replay = ScriptedReasoner(transcript_script(path))
    for t in (1, 2):
        cc_agent_evaluate(IfaReport(), replay, reg2, c2, t, log2)
    assert log1.to_jsonl() == log2.to_jsonl()
    assert DecisionLog.from_jsonl(log1.to_jsonl()).script() == log1.script()
    first = json.loads(path.read_text().splitlines()[0])
    assert set(first) == {"tag", "system", "user", "response"}


class _Chat(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        assert body["messages"][0]["role"] == "system"
        out = json.dumps({"choices": [{"message": {"content": "DECISION: a"}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


def test_http_reasoner_round_trip():
    srv = HTTPServer(("127.0.0.1", 0), _Chat)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    try:
        r = HttpReasoner(f"http://127.0.0.1:{srv.server_port}/v1", "k", "m", timeout_s=5)
        assert r.complete("sys", "user") == "DECISION: a"
    finally:
        srv.shutdown()


def test_http_unreachable_is_fail_safe():
    reg, conn = _conn()
    log = DecisionLog()
    r = HttpReasoner("http://127.0.0.1:9/v1", "", "m", timeout_s=1)
    assert cc_agent_evaluate(IfaReport(), r, reg, conn, 0, log).action == "keep"
    assert "ReasonerUnavailable" in log.entries[0].error
    with pytest.raises(ReasonerUnavailable):
        HttpReasoner("", "", "").complete("s", "u")
