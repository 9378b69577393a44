import csv
import json

import pytest

from aivv.agents import FAIL_MGR, REQ_ENG, SYS_ENG
from aivv.report import build_vv_summary, export_trace_csv, verify_gain_proposal
from aivv.telemetry import FaultSpec, Scenario, SimConfig

DEFAULTS = {"Kp": 0.5, "Ti": 20.0, "Td": 1.0, "Reference_Max_Velocity": 10.0}


def env(sample, role, payload, to="council"):
    return {"timestamp": "t", "sample_id": sample, "from_agent": role, "to_agent": to,
            "payload": payload}


def re_vote(sample, vote, why="Error magnitude exceeds max allowable error"):
    return env(sample, REQ_ENG, {"vote": vote, "confidence": 0.9, "reasoning": why,
                                 "requirement_section": "Operational Limits"})


def fm_vote(sample, vote, peak):
    why = (f"peak_deviation={peak:.2f}, response=DIVERGING, oscillation_count=0. "
           f"peak_deviation={peak:.2f} exceeds max_failure_effect=72.95")
    return env(sample, FAIL_MGR, {"vote": vote, "confidence": 0.9, "risk_level": "HIGH", "reasoning": why,
                                  "failure_management_assessment": {
                                      "peak_deviation": peak, "response": "DIVERGING",
                                      "oscillation_count": 0}})


def se_vote(sample, vote, proposal=None, triggers=()):
    return env(sample, SYS_ENG, {"vote": vote, "confidence": 0.9, "risk_level": "HIGH",
                                 "technical_assessment": "", "reasoning": "r",
                                 "tuning_proposal": proposal, "tuning_reasoning": "because",
                                 "triggered_by": list(triggers)})


def test_empty_log_passes():
    s = build_vv_summary([])
    assert s.verdict == "PASS" and s.proposals == [] and s.warnings == []
    assert (s.req_eng.calls, s.req_eng.fails, s.sys_eng.calls) == (0, 0, 0)
    assert "Num of agent calls : 0 | Num of FAIL  : 0" in s.render_text()


def test_fm_violation_line():
    s = build_vv_summary([fm_vote(225, "FAIL", 77.0)])
    text = s.render_text()
    assert "    - Sample  225 | peak=77.00 | DIVERGING | osc=0 | peak_deviation=77.00 exceeds" in text
    assert "First violation at sample 225: peak_deviation=77.00, response=DIVERGING" in text


def test_details_sorted_and_capped():
    events = [re_vote(s, "FAIL") for s in (240, 221, 230, 222, 250, 223, 224)]
    s = build_vv_summary(events)
    assert [v.sample_id for v in s.req_eng.violations] == sorted(v.sample_id for v in s.req_eng.violations)
    assert s.req_eng.first_violation.sample_id == 221
    assert s.render_text().count("| Operational Limits |") == 5


def test_last_proposal_wins():
    late = {**DEFAULTS, "Kp": 0.7, "Ti": 15.0, "Td": 1.2, "Reference_Max_Velocity": 9.0}
    events = [se_vote(225, "FAIL", late, ("FM", "RE")), se_vote(221, "FAIL", DEFAULTS, ("RE",)),
              se_vote(221, "FAIL", {**DEFAULTS, "Kp": 0.6}, ("RE",))]
    s = build_vv_summary(events)
    assert [p.sample_id for p in s.proposals] == [221, 225]
    assert s.proposals[0].Kp == 0.6
    assert s.last_proposal.params() == late
    assert "Triggered by: FM+RE | SE Vote=FAIL" in s.render_text()


def test_non_council_envelopes_ignored():
    events = [re_vote(1, "FAIL"), env(1, "council", {"majority_decision": "FAIL"}, to="orchestrator"),
              env(1, "sentry", {"decision": "FAIL"})]
    s = build_vv_summary(events)
    assert s.req_eng.calls == 1 and s.fail_mgr.calls == 0


def test_truncated_log_gives_partial_summary(tmp_path):
    path = tmp_path / "events.jsonl"
    lines = [json.dumps(re_vote(1, "FAIL")), json.dumps(re_vote(2, "PASS")), '{"timestamp": "t", "sam']
    path.write_text("\n".join(lines))
    s = build_vv_summary(path)
    assert s.req_eng.calls == 2 and s.warnings
    assert "WARNING" in s.render_text()


def test_missing_log(tmp_path):
    with pytest.raises(FileNotFoundError):
        build_vv_summary(tmp_path / "absent.jsonl")


def test_counts_match_recount_on_a_real_run(tmp_path):
    from aivv.orchestrator import EventLog, Mode, PipelineConfig, run_stream
    from aivv.telemetry import dataset_for, make_windows
    from aivv.engine import build_engine
    from conftest import SMALL

    ds = dataset_for("complex", 1)
    train, test = make_windows(ds)
    events = EventLog()
    _, records, _ = run_stream(build_engine(train, SMALL, seed=1), ds, train, test,
                               PipelineConfig(Mode.FULL, 1), events=events)
    s = build_vv_summary(events).to_dict()
    for role in (REQ_ENG, FAIL_MGR, SYS_ENG):
        mine = [e for e in events.events if e["from_agent"] == role and e["to_agent"] == "council"]
        assert s["roles"][role]["calls"] == len(mine)
        assert s["roles"][role]["fails"] == sum(e["payload"]["vote"] == "FAIL" for e in mine)

    path = export_trace_csv(records, tmp_path / "trace.csv")
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == len(records)
    r = rows[0]
    assert float(r["upper"]) - float(r["lower"]) == pytest.approx(2 * float(r["bound"]))


def test_identical_gains_give_zero_delta():
    cfg = SimConfig(scenario=Scenario.HOVERING, seed=1)
    c = verify_gain_proposal(cfg, DEFAULTS, FaultSpec("spike"))
    assert c.delta == 0.0 and c.settled_before == c.settled_after


def test_zero_fault_settles_both():
    c = verify_gain_proposal(SimConfig(seed=3), {**DEFAULTS, "Kp": 0.7, "Ti": 15.0}, FaultSpec("spike", magnitude=0.0))
    assert c.settled_before and c.settled_after


def test_proposal_gains_must_be_positive():
    with pytest.raises(ValueError):
        verify_gain_proposal(SimConfig(), {**DEFAULTS, "Kp": -1.0})


def test_divergence_is_reported(monkeypatch):
    import aivv.report as report
    real = report.simulate

    def flaky(config, noise=None, fault=None):
        if config.pid.Kp > 1.0:
            raise FloatingPointError("non-finite plant state at step 12")
        return real(config, noise, fault)

    monkeypatch.setattr(report, "simulate", flaky)
    c = verify_gain_proposal(SimConfig(seed=0, n_steps=300), {**DEFAULTS, "Kp": 5.0}, None)
    assert c.diverged_after and not c.settled_after and c.peak_deviation_after == float("inf")
    assert not c.diverged_before and not c.improved
