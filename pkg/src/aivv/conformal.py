"""Split-conformal quantiles with the finite-sample correction."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def _as_fraction(alpha: float) -> Fraction:
    # 0.05 must mean 1/20, not the nearest binary double
    return Fraction(alpha).limit_denominator(10**9)


def quantile_rank(n: int, alpha: float) -> int:
    """Order-statistic rank ``ceil(q * n)`` for the corrected level ``q``.

    Equals ``min(n, ceil((n + 1) * (1 - alpha)))``, computed exactly.
    """
    if n < 1:
        raise ValueError("calibration set is empty")
    a = _as_fraction(alpha)
    return min(n, max(1, math.ceil((n + 1) * (1 - a))))


def corrected_level(n: int, alpha: float) -> float:
    """q = min(1, ceil((n+1)(1-alpha)) / n)."""
    if n < 1:
        raise ValueError("calibration set is empty")
    a = _as_fraction(alpha)
    return float(min(Fraction(1), Fraction(math.ceil((n + 1) * (1 - a)), n)))


def conformal_quantile(scores, alpha: float) -> float:
    """Conservative empirical quantile: the ceil(q n)-th smallest score."""
    scores = np.sort(np.asarray(scores, dtype=float).ravel())
    k = quantile_rank(len(scores), alpha)
    return float(scores[k - 1])
