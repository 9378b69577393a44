"""V&V summary from an event log, closed-loop gain checks and plot-ready CSV."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import FAIL_MGR, REQ_ENG, SYS_ENG, GainProposal
from .telemetry import FaultSpec, NoiseSpec, PIDGains, SimConfig, simulate

log = logging.getLogger(__name__)

MAX_DETAILS = 5
SETTLE_TOLERANCE = 2.0  # deg
SETTLE_FRACTION = 0.1  # tail of the trace that must sit inside the band
ENVELOPE_KEYS = ("timestamp", "sample_id", "from_agent", "to_agent", "payload")

_TITLE = "V&V Summary (Agentic System Verification & Validation)"
_HEADERS = {REQ_ENG: "[Requirements Engineer -- Normal Mode V&V]",
            FAIL_MGR: "[Failure Manager -- Failure Mode V&V]",
            SYS_ENG: "[System Engineer -- Active Optimizer]"}
_SCOPE = {REQ_ENG: ("sampled windows", "operational requirements"),
          FAIL_MGR: ("fault-suspect windows", "failure management requirements")}
# the stub failure manager prefixes its reasoning with the frame metrics
_FM_HEAD = re.compile(r"^peak_deviation=[^,]*, response=\w+, oscillation_count=\d+\.\s*")


@dataclass
class Violation:
    sample_id: int
    message: str
    section: str | None = None
    peak_deviation: float | None = None
    response: str | None = None
    oscillation_count: int | None = None

    def line(self, role: str) -> str:
        if role == FAIL_MGR:
            detail = _FM_HEAD.sub("", self.message) or self.message
            peak = "n/a" if self.peak_deviation is None else f"{self.peak_deviation:.2f}"
            return (f"    - Sample {self.sample_id:4d} | peak={peak} | {self.response or 'n/a'} | "
                    f"osc={self.oscillation_count if self.oscillation_count is not None else 'n/a'} | {detail}")
        return f"    - Sample {self.sample_id:4d} | {self.section or 'n/a'} | {self.message}"


@dataclass
class RoleSummary:
    role: str
    calls: int = 0
    fails: int = 0
    violations: list = field(default_factory=list)  # every FAIL, sorted by sample_id

    @property
    def verdict(self) -> str:
        return "FAIL" if self.fails else "PASS"

    @property
    def first_violation(self) -> Violation | None:
        return self.violations[0] if self.violations else None

    def to_dict(self) -> dict:
        first = self.first_violation
        return {"role": self.role, "calls": self.calls, "fails": self.fails, "verdict": self.verdict,
                "first_violation": dataclasses.asdict(first) if first else None,
                "details": [dataclasses.asdict(v) for v in self.violations[:MAX_DETAILS]]}


@dataclass
class VVSummary:
    req_eng: RoleSummary
    fail_mgr: RoleSummary
    sys_eng: RoleSummary
    proposals: list = field(default_factory=list)  # GainProposal, one per sample, sorted
    warnings: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "FAIL" if any(r.verdict == "FAIL" for r in (self.req_eng, self.fail_mgr)) else "PASS"

    @property
    def last_proposal(self) -> GainProposal | None:
        """The proposal to act on when several exist: the latest one."""
        return self.proposals[-1] if self.proposals else None

    def to_dict(self) -> dict:
        return {"verdict": self.verdict,
                "roles": {r.role: r.to_dict() for r in (self.req_eng, self.fail_mgr, self.sys_eng)},
                "proposals": [{"sample_id": p.sample_id, "triggered_by": list(p.triggered_by),
                               "params": p.params(), "reasoning": p.tuning_reasoning}
                              for p in self.proposals],
                "last_proposal": self.last_proposal.params() if self.last_proposal else None,
                "warnings": list(self.warnings)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def render_text(self) -> str:
        lines = [_TITLE]
        for r in (self.req_eng, self.fail_mgr):
            lines.append(_HEADERS[r.role])
            lines.append(f"  Num of agent calls : {r.calls} | Num of FAIL  : {r.fails}")
            what, rule = _SCOPE[r.role]
            result = (f"  Test result : {r.verdict}  -- {r.fails}/{r.calls} {what} violated {rule}.")
            if r.first_violation:
                result += f" First violation at sample {r.first_violation.sample_id}: {r.first_violation.message}"
            lines.append(result)
            if r.violations:
                lines.append(f"  Violation details (up to {MAX_DETAILS}):")
                lines.extend(v.line(r.role) for v in r.violations[:MAX_DETAILS])
        se = self.sys_eng
        lines.append(_HEADERS[SYS_ENG])
        lines.append(f"  Num of agent calls : {se.calls} | Fail Votes  : {se.fails}")
        lines.append(f"  Gain-Tuning Proposals ({len(self.proposals)} unique samples, triggered by "
                     f"FM/RE FAIL, showing up to {MAX_DETAILS}):")
        for p in self.proposals[:MAX_DETAILS]:
            trig = "+".join(p.triggered_by) or "n/a"
            se_vote = self._se_vote(p.sample_id)
            lines.append(f"    - Sample {p.sample_id:4d} | Triggered by: {trig} | SE Vote={se_vote} | "
                         f"Params: {p.params()}")
            if p.tuning_reasoning:
                lines.append(f"      Reason: {p.tuning_reasoning}")
        for w in self.warnings:
            lines.append(f"  WARNING: {w}")
        return "\n".join(lines)

    def _se_vote(self, sample_id) -> str:
        return "FAIL" if any(v.sample_id == sample_id for v in self.sys_eng.violations) else "PASS"


def read_events(source) -> tuple[list, list]:
    """Envelopes from a path, an ``EventLog`` or a list, plus any warnings.

    A log cut off mid-write keeps every complete line; the damaged tail is
    reported, not raised.
    """
    warnings = []
    if hasattr(source, "events"):
        return list(source.events), warnings
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"event log not found: {path}")
        events = []
        for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError:
                warnings.append(f"line {i} of {path.name} is not valid JSON; log looks truncated")
        return events, warnings
    return list(source or []), warnings


def build_vv_summary(event_log) -> VVSummary:
    """Aggregate council envelopes (agent -> council) into per-role V&V results."""
    events, warnings = read_events(event_log)
    roles = {r: RoleSummary(r) for r in (REQ_ENG, FAIL_MGR, SYS_ENG)}
    proposals = {}
    skipped = 0
    for env in events:
        if not isinstance(env, dict) or any(k not in env for k in ENVELOPE_KEYS):
            skipped += 1
            continue
        role = env["from_agent"]
        if role not in roles or env["to_agent"] != "council":
            continue
        payload = env["payload"] or {}
        if "vote" not in payload:
            skipped += 1
            continue
        sid = int(env["sample_id"])
        summary = roles[role]
        summary.calls += 1
        reasoning = str(payload.get("reasoning", ""))
        if payload["vote"] == "FAIL":
            summary.fails += 1
            fm = payload.get("failure_management_assessment") or {}
            summary.violations.append(Violation(
                sid, reasoning, section=payload.get("requirement_section"),
                peak_deviation=fm.get("peak_deviation"), response=fm.get("response"),
                oscillation_count=fm.get("oscillation_count")))
        if role == SYS_ENG and payload.get("tuning_proposal"):
            tp = payload["tuning_proposal"]
            # later rounds on the same sample overwrite earlier ones
            proposals[sid] = GainProposal(float(tp["Kp"]), float(tp["Ti"]), float(tp["Td"]),
                                          float(tp["Reference_Max_Velocity"]),
                                          tuple(payload.get("triggered_by") or ()),
                                          payload.get("tuning_reasoning") or "", sid)
    if skipped:
        warnings.append(f"{skipped} malformed envelope(s) skipped; summary is partial")
    for w in warnings:
        log.warning(w)
    for r in roles.values():
        r.violations.sort(key=lambda v: v.sample_id)
    return VVSummary(roles[REQ_ENG], roles[FAIL_MGR], roles[SYS_ENG],
                     [proposals[k] for k in sorted(proposals)], warnings)


# -- gain verification ---------------------------------------------------------

@dataclass
class GainCheck:
    peak_deviation_before: float
    peak_deviation_after: float
    settled_before: bool
    settled_after: bool
    diverged_before: bool = False
    diverged_after: bool = False
    proposal: dict = field(default_factory=dict)

    @property
    def delta(self) -> float:
        return self.peak_deviation_after - self.peak_deviation_before

    @property
    def improved(self) -> bool:
        return not self.diverged_after and self.peak_deviation_after <= self.peak_deviation_before

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["delta"] = self.delta
        return d


def apply_proposal(config: SimConfig, proposal) -> SimConfig:
    """Copy of ``config`` with PID gains and reference max velocity replaced."""
    p = proposal.params() if isinstance(proposal, GainProposal) else dict(proposal)
    if "max_velocity" in p:
        p["Reference_Max_Velocity"] = p.pop("max_velocity")
    if min(p["Kp"], p["Ti"], p["Reference_Max_Velocity"]) <= 0 or p["Td"] < 0:
        raise ValueError(f"gain proposal must be positive: {p}")
    return dataclasses.replace(
        config, pid=PIDGains(p["Kp"], p["Ti"], p["Td"]),
        ref_filter=dataclasses.replace(config.ref_filter, max_velocity=p["Reference_Max_Velocity"]))


def _response(config, noise, fault, tolerance):
    try:
        ds = simulate(config, noise, fault)
    except FloatingPointError as exc:
        log.warning("simulation diverged: %s", exc)
        return float("inf"), False, True
    err = np.abs(ds.true_yaw - ds.setpoint)
    start = fault.onset if fault is not None else 0
    tail = err[int(len(err) * (1 - SETTLE_FRACTION)):]
    diverged = not np.all(np.isfinite(err))
    return float(np.max(err[start:])), bool(np.all(tail < tolerance)), diverged


def verify_gain_proposal(sim_config: SimConfig, proposal, fault: FaultSpec | None = None,
                         noise: NoiseSpec | None = None,
                         tolerance: float = SETTLE_TOLERANCE) -> GainCheck:
    """Re-simulate with original and proposed gains under the same seed and fault.

    Parameters
    ----------
    sim_config : SimConfig
        Baseline plant and controller; its seed fixes noise and reference.
    proposal : GainProposal or dict
        Keys ``Kp``, ``Ti``, ``Td`` and ``Reference_Max_Velocity``.
    fault : FaultSpec, optional
        Injected in both runs. Deviation peaks are taken from its onset on.

    Returns
    -------
    GainCheck
        Peak ``|yaw - setpoint|`` after the fault and whether the final 10%
        of each trace stays within ``tolerance`` degrees. A run that blows up
        is flagged as diverged with an infinite peak.
    """
    proposed = apply_proposal(sim_config, proposal)
    before = _response(sim_config, noise, fault, tolerance)
    after = _response(proposed, noise, fault, tolerance)
    return GainCheck(before[0], after[0], before[1], after[1], before[2], after[2],
                     {"Kp": proposed.pid.Kp, "Ti": proposed.pid.Ti, "Td": proposed.pid.Td,
                      "Reference_Max_Velocity": proposed.ref_filter.max_velocity})


# -- traces ----------------------------------------------------------------------

TRACE_COLUMNS = ("sample_id", "raw_index", "target", "prediction", "lower", "upper", "residual",
                 "bound", "uncertainty", "sentry", "label", "truth", "promoted", "degraded")


def trace_rows(records) -> list:
    rows = []
    for r in records:
        i = r.initial
        pred, bound = i.get("prediction"), i["bound"]
        rows.append({"sample_id": r.sample_id, "raw_index": r.raw_index, "target": i.get("target"),
                     "prediction": pred,
                     "lower": None if pred is None else pred - bound,
                     "upper": None if pred is None else pred + bound,
                     "residual": i["residual"], "bound": bound, "uncertainty": i["uncertainty"],
                     "sentry": i["decision"], "label": r.label, "truth": int(r.truth),
                     "promoted": int(r.promoted), "degraded": int(r.degraded)})
    return rows


def export_trace_csv(records, path) -> Path:
    """Prediction, bounds and flags per sample, ready for external plotting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        writer.writerows(trace_rows(records))
    return path
