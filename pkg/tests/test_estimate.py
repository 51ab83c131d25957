import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from gbdp import DomainError, estimate, simulate
from gbdp.estimate import TransitionRecord
from gbdp.model import ModelSpec

records = st.lists(
    st.builds(TransitionRecord, st.integers(1, 50), st.floats(1e-3, 10.0)), min_size=1, max_size=40
)


def test_worked_example():
    recs = [TransitionRecord(1, 0.5), TransitionRecord(2, 0.25), TransitionRecord(1, 1.0)]
    # sum n tau = 0.5 + 0.5 + 1.0 = 2.0
    assert estimate.mle_lambda(recs) == 1.5
    assert estimate.sufficient_statistic(recs) == 2.0 / 3.0
    lo, hi = estimate.confidence_interval(recs, 0.05)
    assert math.isclose(lo, chi2.ppf(0.025, 6) / 4.0, rel_tol=1e-12)
    assert math.isclose(hi, chi2.ppf(0.975, 6) / 4.0, rel_tol=1e-12)


def test_chi2_quantile_matches_scipy():
    for p in (0.01, 0.5, 0.975):
        for dof in (1, 2, 7, 60):
            assert math.isclose(estimate.chi2_quantile(p, dof), chi2.ppf(p, dof), rel_tol=1e-12)


def test_gof_p_value():
    recs = [TransitionRecord(1, 1.0)] * 10
    # S = 10, E = 10: pivot 2 Lambda0 S at Lambda0 = 1 is 20, the chi2_20 median is ~19.3
    p = estimate.chisq_gof(recs, 1.0)
    ref = 2 * min(chi2.cdf(20.0, 20), chi2.sf(20.0, 20))
    assert math.isclose(p, ref, rel_tol=1e-10)
    with pytest.raises(DomainError):
        estimate.chisq_gof(recs, 0.0)


def test_records_from_path():
    spec = ModelSpec.linear((1.0,), (1.0,))
    tr = simulate.simulate_trajectory(spec, 3, 2.0, 11)
    recs = estimate.extract_records(tr)
    assert len(recs) == len(tr.jump_times)
    assert all(r.state_before >= 1 for r in recs)
    assert math.isclose(sum(r.sojourn for r in recs), tr.jump_times[-1] if len(recs) else 0.0)


def test_invalid_records():
    with pytest.raises(DomainError):
        TransitionRecord(0, 1.0)
    with pytest.raises(DomainError):
        TransitionRecord(1, 0.0)
    with pytest.raises(DomainError):
        estimate.mle_lambda([])
    with pytest.raises(DomainError):
        estimate.confidence_interval([TransitionRecord(1, 1.0)], 1.5)


def test_array_input():
    arr = np.array([[1, 0.5], [2, 0.25], [1, 1.0]])
    assert estimate.mle_lambda(arr) == 1.5


@given(recs=records)
@settings(max_examples=120, deadline=None)
def test_hat_tilde_reciprocal(recs):
    prod = estimate.mle_lambda(recs) * estimate.sufficient_statistic(recs)
    assert abs(prod - 1.0) <= 4 * np.finfo(float).eps


@given(recs=records, c=st.floats(0.1, 10.0))
@settings(max_examples=80, deadline=None)
def test_time_rescaling(recs, c):
    scaled = [TransitionRecord(r.state_before, r.sojourn * c) for r in recs]
    assert math.isclose(estimate.mle_lambda(scaled), estimate.mle_lambda(recs) / c, rel_tol=1e-12)
    lo, hi = estimate.confidence_interval(recs)
    lo2, hi2 = estimate.confidence_interval(scaled)
    assert math.isclose(lo2, lo / c, rel_tol=1e-12) and math.isclose(hi2, hi / c, rel_tol=1e-12)
    assert lo < estimate.mle_lambda(recs) < hi
