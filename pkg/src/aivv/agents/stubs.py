"""Deterministic rule-based stand-ins for the five agents.

Each function mirrors one role's voting contract closely enough to run the
whole pipeline offline. Confidence is fixed per branch: 0.9 for clear-cut
calls, 0.7 for marginal ones.
"""

from __future__ import annotations

import logging

from ..engine import ALPHA_BOUNDS
from .context import AgentContext
from .messages import (ALPHA_GRID, FAIL_MGR, REQ_ENG, SYS_ENG, AgentVote, GainProposal,
                       TuningAction)

log = logging.getLogger(__name__)

YAW_LIMIT = 180.0
PER_STEP_LIMIT = 10.0
MASKING_MULTIPLIER = 2.0
POOR_PREDICTION_MULTIPLIER = 3.0
PERSISTENT_BREACHES = 3

CLEAR, MARGINAL = 0.9, 0.7


def req_eng_vote(ctx: AgentContext) -> AgentVote:
    y, prev, mult = ctx.true_value, ctx.previous_value, ctx.bound_multiplier
    true_step = y - prev
    pred_step = ctx.prediction - prev

    def vote(v, section, why, conf=CLEAR, veto=None):
        return AgentVote(REQ_ENG, v, conf, why,
                         fields={"requirement_section": section, "veto_reason": veto})

    if abs(y) > YAW_LIMIT:
        return vote("FAIL", "Normal Operation", f"Yaw {y:.2f} deg is outside [-180, 180]",
                    veto="yaw range")
    if abs(true_step) > PER_STEP_LIMIT:
        if abs(pred_step) <= PER_STEP_LIMIT:
            return vote("PASS", "Normal Operation",
                        f"Measured step {true_step:.2f} deg breaks the per-step limit but the "
                        f"model expects {pred_step:.2f} deg; treating it as a sensor artefact",
                        MARGINAL)
        return vote("FAIL", "Normal Operation",
                    f"Per-step change {true_step:.2f} deg and predicted {pred_step:.2f} deg "
                    "both exceed 10 deg", veto="per-step range")
    if mult > MASKING_MULTIPLIER:
        conf = CLEAR if mult > POOR_PREDICTION_MULTIPLIER else MARGINAL
        return vote("FAIL", "Operational Limits",
                    f"Error magnitude exceeds max allowable error (bound_multiplier={mult:.2f})",
                    conf, veto="masking risk")
    return vote("PASS", "Normal Operation",
                f"Yaw {y:.2f} deg and step {true_step:.2f} deg are in range; "
                f"bound_multiplier={mult:.2f} stays under 2.0", MARGINAL if mult > 1.5 else CLEAR)


def _risk(peak: float, limit: float) -> str:
    ratio = peak / limit if limit > 0 else float("inf")
    if ratio < 1 / 3:
        return "LOW"
    if ratio < 2 / 3:
        return "MEDIUM"
    return "HIGH"


def fail_mgr_vote(ctx: AgentContext) -> AgentVote:
    m = ctx.metrics()
    if m is None:
        log.warning("sample %s: frame too short for failure analysis, abstaining", ctx.sample_id)
        return AgentVote(FAIL_MGR, "PASS", 0.5, "Frame too short to assess recovery; abstaining",
                         "LOW", fields={"failure_management_assessment": {}})
    b = ctx.baseline
    limit = b.max_failure_effect
    assessment = {"peak_deviation": round(m.peak_deviation, 2), "range": round(m.range, 2),
                  "oscillation_count": m.oscillation_count, "response": m.response,
                  "max_failure_effect": round(limit, 2), "current_deviation": round(m.current_deviation, 2),
                  "drift_rate": round(m.drift_rate, 4)}
    head = (f"peak_deviation={m.peak_deviation:.2f}, response={m.response}, "
            f"oscillation_count={m.oscillation_count}.")
    risk = _risk(m.peak_deviation, limit)

    def vote(v, why, conf, risk_level=risk):
        return AgentVote(FAIL_MGR, v, conf, why, risk_level,
                         fields={"failure_management_assessment": assessment})

    margin = b.yaw_max - b.yaw_min
    def outside(v):
        return not (b.yaw_min - margin <= v <= b.yaw_max + margin)

    # a wild prediction alone only means the input window is stale
    if outside(ctx.prediction) and outside(ctx.true_value):
        return vote("FAIL", f"{head} Predicted yaw {ctx.prediction:.2f} and measured yaw "
                            f"{ctx.true_value:.2f} are far outside the training envelope", CLEAR, "HIGH")
    if abs(m.drift_rate) > b.drift_limit > 0:
        return vote("FAIL", f"{head} Sustained drift {m.drift_rate:.3f}/step exceeds the nominal "
                            f"limit {b.drift_limit:.3f}/step; heading is running away", CLEAR, "HIGH")
    if m.peak_deviation > limit and m.response == "DIVERGING":
        return vote("FAIL", f"{head} peak_deviation={m.peak_deviation:.2f} exceeds "
                            f"max_failure_effect={limit:.2f}", CLEAR, "HIGH")
    if m.current_deviation > limit:
        return vote("FAIL", f"{head} current deviation {m.current_deviation:.2f} still exceeds "
                            f"max_failure_effect={limit:.2f}", MARGINAL, "MEDIUM" if risk == "LOW" else risk)
    if m.peak_deviation > limit:
        return vote("PASS", f"{head} Transient peaked above {limit:.2f} but the latest deviation "
                            f"{m.current_deviation:.2f} is back inside; contained and recovering", MARGINAL)
    return vote("PASS", f"Peak deviation {m.peak_deviation:.2f} < {limit:.2f}, range "
                        f"{m.range:.2f}, {m.response.lower()}", CLEAR)


GAIN_STEP = {"Kp": 0.1, "Ti": 2.5, "Td": 0.2}
VELOCITY_STEP = 0.5


def propose_gains(ctx: AgentContext, fm: AgentVote, re: AgentVote, triggers: tuple) -> GainProposal:
    """Adjust the autopilot gains from the pattern in the frame.

    High uncertainty raises Kp and Td, low-frequency oscillation lowers Kp
    and raises Ti, divergence lowers Td and raises Ti. Any confirmed
    failure also slows the reference.
    """
    g = {k: float(ctx.gains.get(k, 0.0)) for k in ("Kp", "Ti", "Td")}
    vmax = float(ctx.gains.get("Reference_Max_Velocity", 10.0))
    m = ctx.metrics()
    reasons = []
    if ctx.uncertainty > ctx.uncertainty_threshold:
        g["Kp"] += GAIN_STEP["Kp"]
        g["Td"] += GAIN_STEP["Td"]
        reasons.append("high predictive uncertainty: raised Kp and Td")
    if m is not None and m.oscillation_count >= 2:
        g["Kp"] -= GAIN_STEP["Kp"]
        g["Ti"] += GAIN_STEP["Ti"]
        reasons.append(f"{m.oscillation_count} oscillation half-cycles: lowered Kp, raised Ti")
    if m is not None and m.response == "DIVERGING":
        g["Td"] -= GAIN_STEP["Td"]
        g["Ti"] += GAIN_STEP["Ti"]
        reasons.append("diverging response: lowered Td, raised Ti")
    if not reasons:
        g["Kp"] += GAIN_STEP["Kp"]
        reasons.append("tracking error over limits: raised Kp")
    vmax -= VELOCITY_STEP
    g = {k: round(max(v, 0.05), 3) for k, v in g.items()}
    return GainProposal(g["Kp"], g["Ti"], g["Td"], round(max(vmax, 0.5), 3), triggers,
                        "; ".join(reasons) + f"; reference max velocity -> {max(vmax, 0.5):.1f}",
                        ctx.sample_id)


def sys_eng_vote(ctx: AgentContext, re: AgentVote, fm: AgentVote) -> AgentVote:
    mult = ctx.bound_multiplier
    high_unc = ctx.uncertainty > ctx.uncertainty_threshold
    m = ctx.metrics()
    limit = ctx.baseline.max_failure_effect
    recovered = (fm.vote == "PASS" and m is not None and m.peak_deviation > limit
                 and m.current_deviation <= limit)
    adaptation_failed = ctx.loop == 2 and ctx.candidate is not None and not ctx.candidate.get(
        "passes_reevaluation", False)

    if fm.vote == "FAIL" and fm.risk_level == "HIGH":
        vote, conf, risk = "FAIL", CLEAR, "HIGH"
        why = "Failure manager confirms a high-risk failure mode; the breach is not a model artefact"
    elif recovered:
        vote, conf, risk = "PASS", MARGINAL, "LOW"
        why = ("The input window still holds a transient the plant has already recovered from; "
               "the large error is model lag, not a fault")
    elif high_unc and mult > MASKING_MULTIPLIER:
        vote, conf, risk = "FAIL", MARGINAL, "MEDIUM"
        why = (f"Uncertainty {ctx.uncertainty:.3f} above threshold {ctx.uncertainty_threshold:.3f} "
               f"together with bound_multiplier={mult:.2f}")
    elif mult > POOR_PREDICTION_MULTIPLIER:
        vote, conf, risk = "FAIL", MARGINAL, "MEDIUM"
        why = f"Prediction error is {mult:.2f}x the conformal bound; the LSTM cannot explain this sample"
    elif adaptation_failed and ctx.recent_breaches >= PERSISTENT_BREACHES and m is not None \
            and m.response == "DIVERGING":
        vote, conf, risk = "FAIL", MARGINAL, "MEDIUM"
        why = "Adaptation could not absorb a persistent, diverging breach"
    else:
        vote, conf, risk = "PASS", CLEAR if mult < 1.5 else MARGINAL, "LOW"
        why = (f"Breach (bound_multiplier={mult:.2f}) is consistent with maneuver-driven drift in "
               "uncertainty; failure manager finds the response contained")

    triggers = tuple(r for r, v in (("FM", fm), ("RE", re)) if v.vote == "FAIL")
    proposal = propose_gains(ctx, fm, re, triggers) if triggers else None
    assessment = (f"bound_multiplier={mult:.2f}, sigma={ctx.uncertainty:.3f} vs tau="
                  f"{ctx.uncertainty_threshold:.3f}, FM={fm.vote}/{fm.risk_level}, RE={re.vote}")
    return AgentVote(SYS_ENG, vote, conf, why, risk, fields={"technical_assessment": assessment},
                     proposal=proposal)


def inspector_decide(ctx: AgentContext, votes: list) -> TuningAction:
    passes = sum(v.vote == "PASS" for v in votes)
    fails = len(votes) - passes
    majority = "PASS" if passes >= 2 else "FAIL"
    fm = next((v for v in votes if v.agent == FAIL_MGR), None)
    mult = ctx.bound_multiplier
    # widen coverage in proportion to the overshoot, snapped to the alpha grid
    alpha = max(ALPHA_BOUNDS[0], min(ALPHA_BOUNDS[1], round(ctx.alpha / max(mult, 1.0), 2)))
    common = dict(majority_decision=majority, pass_votes=passes, fail_votes=fails)
    transient = ctx.recent_breaches <= 1 and fm is not None and fm.vote == "PASS" and fm.risk_level == "LOW"
    if transient:
        return TuningAction("RECALIBRATE", reasoning=(
            f"Isolated breach (error {ctx.residual:.3f} vs bound {ctx.bound:.3f}) with a contained "
            f"response; widening coverage via alpha={alpha:.2f}"), new_alpha=alpha, **common)
    if ctx.recent_breaches >= PERSISTENT_BREACHES:
        epochs = min(200, 50 + 10 * (ctx.recent_breaches - PERSISTENT_BREACHES))
        return TuningAction("FINE_TUNE", reasoning=(
            f"{ctx.recent_breaches} breaches in the recent history point to persistent drift; "
            f"fine-tuning for {epochs} epochs"), epochs=epochs, learning_rate=3e-5, **common)
    return TuningAction("TRY_BOTH", reasoning="Mixed evidence; fine-tune briefly and re-sweep alpha",
                        new_alpha=alpha, epochs=50, learning_rate=1e-5, **common)


def tuner_recommend(error: float, bounds_by_alpha: dict, fallback: float) -> tuple[float, bool, str]:
    """Pick the largest grid alpha (tightest bound) whose bound still covers ``error``."""
    covering = [a for a in ALPHA_GRID if bounds_by_alpha[a] >= error]
    checks = ", ".join(f"{int(round(100 * (1 - a)))}%: {'pass' if bounds_by_alpha[a] >= error else 'fail'}"
                       for a in (0.05, 0.02, 0.01))
    if covering:
        a = max(covering)
        return a, True, f"error {error:.3f} covered at alpha={a:.2f} ({checks})"
    return fallback, False, f"error {error:.3f} exceeds every grid bound ({checks})"
