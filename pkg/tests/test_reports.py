import pytest
from hypothesis import given, settings, strategies as st

from agentnet import reports
from agentnet.alloc import NegativeWeight, ObjectiveWeights
from agentnet.cc import GeneratedCcSpec
from agentnet.nfs import ChainEntry, NfDescriptor, SfcPlan
from agentnet.reports import (
    SECTIONS, CcDecision, IfaReport, ObservedQos, ReportError, WeightUpdate, parse_cc_decision,
    parse_sfc_plan, parse_weight_update, render_cc_decision, render_ifa_report, render_sfc_plan,
    render_weight_update, split_sections,
)

words = st.lists(st.text("abcdefghij0123456789,.;()-", min_size=1, max_size=8), max_size=6).map(" ".join)
finite = st.floats(0, 1e6, allow_nan=False)


def test_ifa_layout_oracle():
    text = render_ifa_report(IfaReport(observed_qos=ObservedQos(loss=0.08, latency_ms=12.34)))
    sec = split_sections(text)
    assert tuple(sec) == SECTIONS
    assert "Loss: 8.0%" in sec["Observed QoS Metrics"] and "Latency: 12.3 ms" in sec["Observed QoS Metrics"]
    assert [ln for ln in text.splitlines() if ln.startswith("# ")] == [f"# {t}" for t in SECTIONS]


@given(st.text(), st.text(), st.text())
@settings(max_examples=1000)
def test_free_text_cannot_forge_sections(app, qoe, guidance):
    rep = IfaReport(
        application_profile=reports.ApplicationProfile(app_type=app),
        user_perceived_quality=reports.UserPerceivedQuality(text=qoe),
        runtime_requirements=reports.RuntimeRequirements(guidance=guidance),
    )
    assert tuple(split_sections(render_ifa_report(rep))) == SECTIONS


def test_ifa_value_checks():
    with pytest.raises(ReportError):
        ObservedQos(loss=-0.1)
    with pytest.raises(ReportError):
        reports.UserPerceivedQuality(score=1.5)


specs = st.builds(
    GeneratedCcSpec,
    name=st.integers(1, 999).map(lambda i: f"llm_cc_v{i}"),
    additive_increase=st.floats(0.01, 50), beta=st.floats(0.01, 0.99), rtt_threshold=st.floats(1.01, 5),
    pacing_gain=st.floats(1, 3), rtt_sensitivity=st.floats(0, 1),
)
decisions = st.one_of(
    st.builds(lambda r, s: CcDecision("keep", rationale=r, step_summaries=s), words, st.lists(words, max_size=8).map(tuple)),
    st.builds(lambda p, r: CcDecision("tune", tuned_params=p, rationale=r),
              st.dictionaries(st.sampled_from(["beta", "c", "alpha"]), finite, min_size=1), words),
    st.builds(lambda n: CcDecision("switch", target_scheme=n), st.sampled_from(["reno", "cubic_lite", "vegas_lite"])),
    st.builds(lambda sp, r: CcDecision("generate", generated_spec=sp, rationale=r), specs, words),
)


def _norm(d: CcDecision) -> CcDecision:
    # rendering collapses whitespace and empty steps become n/a
    steps = tuple(reports._line(s) for s in d.step_summaries)
    return CcDecision(d.action, d.tuned_params, d.target_scheme, d.generated_spec,
                      " ".join(d.rationale.split()), steps)


@given(decisions)
@settings(max_examples=2000)
def test_cc_decision_round_trip(d):
    assert parse_cc_decision(render_cc_decision(d)) == _norm(d)


def test_cc_decision_errors():
    with pytest.raises(reports.MissingDecisionLine):
        parse_cc_decision("I think we should keep it")
    with pytest.raises(reports.UnknownAction):
        parse_cc_decision("DECISION: z")
    with pytest.raises(reports.MalformedGeneratedSpec):
        parse_cc_decision("DECISION: d\n```ccspec\nname=llm_cc_v1\nbeta=1.5\n```")
    with pytest.raises(reports.MalformedGeneratedSpec):
        parse_cc_decision("DECISION: d\nno block")
    assert parse_cc_decision("preamble\nDECISION: (c) switch\nSCHEME: cubic_lite").target_scheme == "cubic_lite"


weights = st.tuples(*[st.floats(0, 10)] * 4).filter(lambda w: sum(w) > 1e-6)


@given(weights, words, st.lists(words, max_size=3).map(tuple))
@settings(max_examples=1000)
def test_weight_update_round_trip(w, rationale, steps):
    u = WeightUpdate(ObjectiveWeights(*w), rationale, steps)
    back = parse_weight_update(render_weight_update(u))
    assert back.weights.as_tuple() == pytest.approx(u.weights.as_tuple(), abs=1e-15)
    assert back.rationale == " ".join(rationale.split())


def test_weight_errors():
    out = parse_weight_update("WEIGHTS: a1=1 a2=1 a3=1 a4=1")
    assert out.weights.as_tuple() == (0.25, 0.25, 0.25, 0.25)
    with pytest.raises(reports.MissingWeightsLine):
        parse_weight_update("weights are fine")
    with pytest.raises(reports.MissingWeightsLine):
        parse_weight_update("WEIGHTS: a1=1 a2=1")
    with pytest.raises(reports.NonNumericWeight):
        parse_weight_update("WEIGHTS: a1=x a2=1 a3=0 a4=0")
    with pytest.raises(NegativeWeight):
        parse_weight_update("WEIGHTS: a1=-1 a2=1 a3=0 a4=0")


names = st.sampled_from(["QoS Enforcer", "Transport Assistant", "Packet Forwarder", "Jitter Buffer"])
nodes = st.sampled_from(["n1", "n2", "n3", "edge-7"])
configs = st.dictionaries(st.sampled_from(["timeout_us", "queue_packets", "rate"]),
                          st.one_of(st.integers(0, 10**6), st.floats(0.5, 1e6)), max_size=2)


@st.composite
def plans(draw):
    positions = draw(st.lists(st.integers(1, 9), unique=True, max_size=4))
    chain = []
    for pos in positions:
        name = draw(names)
        new = None
        if name == "Jitter Buffer":
            new = NfDescriptor(name, "smooths arrivals", ("llmproto",), ("llmproto",), cpu=2.0, mem_mb=64.0)
        chain.append(ChainEntry(pos, name, draw(nodes), draw(configs), new))
    return SfcPlan(chain, draw(st.sampled_from(reports.PLAN_PROTOCOLS)),
                   draw(st.one_of(st.none(), st.integers(0, 9))), draw(words))


@given(plans())
@settings(max_examples=1000)
def test_plan_round_trip(plan):
    back = parse_sfc_plan("Here is the plan:\n" + render_sfc_plan(plan))
    assert back.protocol == plan.protocol and back.path_index == plan.path_index
    assert back.ordered() == plan.ordered()
    assert back.notes == " ".join(plan.notes.split())


def test_plan_errors():
    with pytest.raises(reports.MissingPlanBlock):
        parse_sfc_plan("protocol=custom")
    with pytest.raises(reports.DuplicateChainPosition):
        parse_sfc_plan("```sfcplan\nprotocol=custom\nnf.1=A @ n1\nnf.1=B @ n2\n```")
    with pytest.raises(reports.UnknownProtocolKind):
        parse_sfc_plan("```sfcplan\nprotocol=quic\n```")
    with pytest.raises(reports.MalformedPlan):
        parse_sfc_plan("```sfcplan\nprotocol=custom\nnf.1=A\n```")


ALLOWED = (ReportError, NegativeWeight)


@given(st.text(max_size=400))
@settings(max_examples=3000)
def test_parsers_never_crash(text):
    for parser in (parse_cc_decision, parse_weight_update, parse_sfc_plan):
        try:
            parser(text)
        except ALLOWED:
            pass


fragments = st.lists(st.sampled_from([
    "DECISION: a", "DECISION: d", "DECISION: b", "DECISION: c", "PARAMS: beta=0.5", "PARAMS: beta=x",
    "SCHEME:", "SCHEME: reno", "```ccspec", "```sfcplan", "```", "name=llm_cc_v1", "beta=2", "beta=nan",
    "protocol=custom", "nf.1=A @ n1", "nf.x=A @ n1", "newnf.A=in=bogus", "WEIGHTS: a1=0 a2=0 a3=0 a4=0",
    "WEIGHTS: a1=inf a2=1 a3=1 a4=1", "a1=1", "=", "path=q", "STEP 1:", "RATIONALE:",
]), max_size=12).map("\n".join)


@given(fragments)
@settings(max_examples=3000)
def test_structured_garbage_never_crashes(text):
    for parser in (parse_cc_decision, parse_weight_update, parse_sfc_plan):
        try:
            parser(text)
        except ALLOWED:
            pass
