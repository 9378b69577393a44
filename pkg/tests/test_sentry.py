import numpy as np
from hypothesis import given, strategies as st

from aivv import sentry
from aivv.agents import CandidateState
from aivv.sentry import Verdict

TRACE_ERROR, TRACE_BOUND = 1.6831555, 1.2202799


def test_gate_is_strict():
    assert sentry.gate(1.0, 1.0) is Verdict.PASS
    assert sentry.gate(np.nextafter(1.0, 2.0), 1.0) is Verdict.FAIL


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_gate_matches_comparison(residual, bound):
    assert (sentry.gate(residual, bound) is Verdict.FAIL) == (residual > bound)


def test_trace_values_fail_and_candidate_reports_no_pass():
    assert sentry.gate(TRACE_ERROR, TRACE_BOUND) is Verdict.FAIL
    state = CandidateState(0.0, TRACE_BOUND, TRACE_ERROR, 0.0, 0.05,
                           sentry.gate(TRACE_ERROR, TRACE_BOUND) is Verdict.PASS)
    assert state.passes_reevaluation is False


def test_evaluate_is_pure_and_repeatable(small_engine, hover_pairs):
    _, test = hover_pairs
    before = small_engine.parameter_hash()
    a = sentry.evaluate(small_engine, test.inputs[5], test.targets[5], 5)
    b = sentry.evaluate(small_engine, test.inputs[5], test.targets[5], 5)
    assert a == b
    assert small_engine.parameter_hash() == before
    assert a.bound == small_engine.conformal_bound
    assert a.decision is sentry.gate(a.residual, a.bound)


def test_spike_window_is_flagged(small_engine, hover_pairs):
    _, test = hover_pairs
    i = int(np.flatnonzero(test.raw_index == 1200)[0])
    d = sentry.evaluate(small_engine, test.inputs[i], test.targets[i], i)
    assert d.decision is Verdict.FAIL and d.bound_multiplier > 3
