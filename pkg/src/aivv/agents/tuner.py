"""Apply an Inspector action to a cloned engine and re-score the sample."""

from __future__ import annotations

from .. import sentry
from ..engine import Engine
from ..telemetry import WindowPairs
from .context import AgentContext
from .messages import ALPHA_GRID, CandidateState, TuningAction


def _sweep(engine: Engine, ctx: AgentContext, error: float, fallback: float, backend) -> tuple:
    bounds = {a: engine.bound_at(a) for a in ALPHA_GRID}
    alpha, _, why = backend.tune(ctx, error, bounds, fallback)
    engine.recalibrate(alpha)
    return alpha, why


def tuner_apply(action: TuningAction, candidate: Engine, ctx: AgentContext, x_t, y_t,
                recent: WindowPairs | None, backend) -> CandidateState:
    """Mutates ``candidate`` (which must be a clone) and reports its re-check."""
    note = ""
    if action.action in ("FINE_TUNE", "TRY_BOTH"):
        if recent is None or len(recent) == 0:
            note = "no recent pairs to fine-tune on"
        elif not candidate.fine_tune(recent, action.epochs, action.learning_rate):
            before = sentry.evaluate(candidate, x_t, y_t, ctx.sample_id)
            return CandidateState(before.prediction, before.bound, before.residual, before.uncertainty,
                                  candidate.alpha, False, "fine-tune diverged; candidate rejected")
    if action.action in ("RECALIBRATE", "TRY_BOTH"):
        probe = sentry.evaluate(candidate, x_t, y_t, ctx.sample_id)
        fallback = action.new_alpha if action.new_alpha is not None else candidate.alpha
        _, note = _sweep(candidate, ctx, probe.residual, fallback, backend)
    after = sentry.reevaluate_candidate(candidate, x_t, y_t, ctx.sample_id)
    return CandidateState(after.prediction, after.bound, after.residual, after.uncertainty,
                          float(candidate.alpha), after.decision == sentry.Verdict.PASS, note)
