"""Deterministic residual gate in front of the agent council."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .engine import Engine


class Verdict(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"


@dataclass(frozen=True)
class SentryDecision:
    sample_id: int
    residual: float
    bound: float
    uncertainty: float
    prediction: float
    target: float
    decision: Verdict

    @property
    def bound_multiplier(self) -> float:
        return self.residual / self.bound if self.bound > 0 else float("inf")


def gate(residual: float, bound: float) -> Verdict:
    """FAIL only when the residual strictly exceeds the bound; ties pass."""
    return Verdict.FAIL if residual > bound else Verdict.PASS


def sample_rng(engine: Engine, sample_id: int) -> np.random.Generator:
    # masks keyed on (engine seed, sample) so re-checks replay identically
    return np.random.default_rng([engine.seed, 15485863, int(sample_id)])


def evaluate(engine: Engine, x_t, y_t: float, sample_id: int = 0) -> SentryDecision:
    """Score one window against the engine's live conformal bound.

    Dropout masks come from a generator keyed on the sample, so the call
    leaves the engine untouched and repeats bit-identically.
    """
    if not engine.calibrated:
        raise RuntimeError("sentry needs a calibrated engine")
    pred = engine.mc_predict(np.asarray(x_t, dtype=float), rng=sample_rng(engine, sample_id))
    residual = abs(pred.mean - float(y_t))
    bound = float(engine.conformal_bound)
    return SentryDecision(sample_id, residual, bound, pred.std, pred.mean, float(y_t),
                          gate(residual, bound))


# the candidate check is the same rule run against the clone's own bound
reevaluate_candidate = evaluate
