"""End-to-end acceptance bar: one PASS/FAIL line per criterion."""
import time

import pytest

from agentnet.agents import DecisionLog, ScriptedReasoner
from agentnet.cli import default_config
from agentnet.experiments import load_config, run_cc_experiment, run_experiment, run_ra_sim, run_sfc_experiment

import test_alloc
import test_cc
import test_kernels
import test_proto

pytestmark = pytest.mark.acceptance
SEED = 1
LINES: list[str] = []
_RUNS: dict = {}


def run(kind):
    if kind not in _RUNS:
        t0 = time.perf_counter()
        res = run_experiment(load_config(default_config(kind), SEED))
        _RUNS[kind] = (res, time.perf_counter() - t0)
    return _RUNS[kind]


def report(capsys, number, checks, extra=""):
    """Print one line for the criterion and fail with the list of broken checks."""
    broken = [name for name, ok in checks if not ok]
    line = f"ACCEPTANCE {number}: {'PASS' if not broken else 'FAIL'}"
    if extra:
        line += f" | {extra}"
    if broken:
        line += f" | failed: {', '.join(broken)}"
    LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert not broken, line


def test_criterion_1_sfc_three_way(capsys):
    res, wall = run("sfc")
    s = res.summary["scenarios"]
    llm, udp, tcp = s["sfc-agent"], s["udp-like"], s["tcp-like"]
    udp_total = (udp["delivered_reliable"] + udp["delivered_best_effort"]) / (
        udp["offered_reliable"] + udp["offered_best_effort"])
    fct_l, fct_u, fct_t = (x["flow_completion_time_s"] for x in (llm, udp, tcp))
    checks = [
        ("llmproto reliable = 100%", llm["reliable_ratio"] == 1.0),
        ("llmproto best-effort in [75%, 85%]", 0.75 <= llm["best_effort_ratio"] <= 0.85),
        ("udp delivery in [78%, 82%]", 0.78 <= udp_total <= 0.82),
        ("tcp both classes = 100%", tcp["reliable_ratio"] == 1.0 and tcp["best_effort_ratio"] == 1.0),
        ("FCT llmproto < tcp", fct_l < fct_t),
        ("FCT llmproto within 15% of udp", abs(fct_l - fct_u) <= 0.15 * fct_u),
        ("send rate within 10% of 1 Mbps", abs(llm["mean_send_rate_bps"] - 1e6) <= 0.1e6),
        ("runtime < 60 s", wall < 60),
    ]
    extra = (f"rel={llm['reliable_ratio']:.3f} be={llm['best_effort_ratio']:.3f} udp={udp_total:.3f} "
             f"fct l/u/t={fct_l:.1f}/{fct_u:.1f}/{fct_t:.1f}s rate={llm['mean_send_rate_bps'] / 1e6:.3f}Mbps "
             f"wall={wall:.1f}s")
    report(capsys, 1, checks, extra)


def test_criterion_2_cc_adaptation(capsys):
    res, wall = run("cc")
    s = res.summary
    swaps = s["swaps"]
    phases = {p["scheme"]: p for p in s["phases"]}
    times = [w["time_s"] for w in swaps]
    names = [(w["old"], w["new"]) for w in swaps]
    v2, base = phases.get("llm_cc_v2"), phases.get("reno")
    checks = [
        ("swap sequence reno -> llm_cc_v1 -> llm_cc_v2",
         names == [("reno", "llm_cc_v1"), ("llm_cc_v1", "llm_cc_v2")]),
        ("first swap at 60-70 s", len(times) >= 1 and 60 <= times[0] <= 70),
        ("second swap at 120-150 s", len(times) >= 2 and 120 <= times[1] <= 150),
        ("throughput after 2nd swap >= 85% of bottleneck",
         v2 is not None and v2["throughput_bps"] >= 0.85 * s["bottleneck_bps"]),
        ("loss after 2nd swap < 4%", v2 is not None and v2["loss_pct"] < 4.0),
        ("cwnd CV below reno phase", v2 is not None and base is not None and v2["cwnd_cv"] < base["cwnd_cv"]),
        ("zero connection resets", s["flow"]["resets"] == 0),
        ("runtime < 60 s", wall < 60),
    ]
    extra = ""
    if v2 is not None and base is not None:
        extra = (f"swaps={times} v2 thr={v2['throughput_bps'] / 1e6:.2f}Mbps loss={v2['loss_pct']:.2f}% "
                 f"cv v2/reno={v2['cwnd_cv']:.3f}/{base['cwnd_cv']:.3f} wall={wall:.1f}s")
    report(capsys, 2, checks, extra)


def test_criterion_3_ra_green_weights(capsys):
    res, wall = run("ra")
    s = res.summary
    first = [w for w in s["windows"] if w["window_h"][1] <= 72 and w["window_h"][0] >= 24]
    after = s["first_half_after_update"]["change_pct"]
    whole = s["first_half"]["change_pct"]
    second = s["second_half"]["change_pct"]
    checks = [
        ("green <= -10% in every post-update window of the first 72 h",
         bool(first) and all(w["change_pct"]["green_penalty"] <= -10 for w in first)),
        ("green <= -10% over [24, 72) h", after["green_penalty"] <= -10),
        ("profit within 10% over the first 72 h", abs(whole["profit"]) <= 10 and abs(after["profit"]) <= 10),
        ("green reduced over the last 72 h", second["green_penalty"] < 0),
        ("cost increase <= 10% over the last 72 h", second["cost"] <= 10),
        ("runtime < 120 s", wall < 120),
    ]
    extra = (f"green [24,72)={after['green_penalty']:.1f}% windows="
             f"{[round(w['change_pct']['green_penalty'], 1) for w in first]} profit [0,72)={whole['profit']:.1f}% "
             f"green [72,144)={second['green_penalty']:.1f}% cost [72,144)={second['cost']:.1f}% wall={wall:.1f}s")
    LINES.append(f"ACCEPTANCE 3 info: green over [0, 72) h including the pre-decision window = "
                 f"{whole['green_penalty']:.1f}%")
    report(capsys, 3, checks, extra)


def _runs_clean(fn, *args):
    try:
        fn(*args)
        return True
    except AssertionError:
        return False


RUNNERS = {"sfc": run_sfc_experiment, "cc": run_cc_experiment, "ra": run_ra_sim}


def _replays(kind):
    """Fresh run and a replay from the recorded decisions both match the first run."""
    res, _ = run(kind)
    cfg = load_config(default_config(kind), SEED)
    again = run_experiment(cfg)
    log_name = "decisions_agent.jsonl" if kind == "ra" else "decisions.jsonl"
    script = DecisionLog.from_jsonl(res.files[log_name]).script()
    replay = RUNNERS[kind](cfg, ScriptedReasoner(script))
    return again.files == res.files and replay.files == res.files


def test_criterion_4_property_suites(capsys, tmp_path):
    checks = [
        ("header round-trip fuzz 10^4", _runs_clean(test_proto.test_header_round_trip)),
        ("jain bounds 10^3", _runs_clean(test_kernels.test_jain_bounds)),
        ("jain equal shares 10^3", _runs_clean(test_kernels.test_jain_equal_shares_is_one)),
        ("min-max in [0, 1]", _runs_clean(test_kernels.test_minmax_in_unit_interval)
         and _runs_clean(test_kernels.test_minmax_degenerate)),
        ("objective example 0.425", _runs_clean(test_alloc.test_objective_oracles)),
        ("a4 argmin monotonicity 10^3", _runs_clean(test_alloc.test_green_weight_monotone)),
        ("reno +1 pkt/RTT", _runs_clean(test_cc.test_reno_gains_one_packet_per_rtt_in_simulation)),
        ("exhaustive drops on 5-message streams", _runs_clean(test_proto.test_reliable_completeness_exhaustive_drops)),
    ]
    for kind in ("sfc", "cc", "ra"):
        checks.append((f"bit-identical replay {kind}", _replays(kind)))
    report(capsys, 4, checks, f"{len(checks)} checks")
