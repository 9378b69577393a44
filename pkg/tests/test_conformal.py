import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aivv.conformal import conformal_quantile, corrected_level, quantile_rank

ALPHAS = [Fraction(k, 100) for k in range(1, 11)]


def oracle_level(n, alpha: Fraction) -> Fraction:
    return min(Fraction(1), Fraction(math.ceil((n + 1) * (1 - alpha)), n))


def test_level_matches_rational_oracle_everywhere():
    for n in range(1, 501):
        for a in ALPHAS:
            q = oracle_level(n, a)
            assert corrected_level(n, float(a)) == float(q)
            assert quantile_rank(n, float(a)) == math.ceil(q * n)


def test_known_ranks():
    # 194 calibration residuals: alpha 0.05 takes the 186th, alpha 0.01 the maximum
    assert quantile_rank(194, 0.05) == 186
    assert quantile_rank(194, 0.01) == 194
    assert quantile_rank(19, 0.05) == 19


def test_quantile_picks_order_statistic():
    scores = np.arange(1.0, 101.0)
    assert conformal_quantile(scores[::-1], 0.1) == 91.0


def test_empty_calibration_rejected():
    with pytest.raises(ValueError):
        quantile_rank(0, 0.05)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=300),
       st.sampled_from([float(a) for a in ALPHAS]))
def test_quantile_is_a_score_and_monotone_in_alpha(scores, alpha):
    q = conformal_quantile(scores, alpha)
    assert q in scores
    assert conformal_quantile(scores, 0.01) >= q >= conformal_quantile(scores, 0.10)
