import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbdp import DependencyError, UnsupportedVariantError, kolmogorov, moments
from gbdp.model import ModelSpec


@pytest.mark.parametrize("f,g", [
    (moments.phi1, lambda x: math.expm1(x) / x),
    (moments.phi2, lambda x: (math.exp(x) - 1 - x) / x**2),
    (moments.h, lambda x: (x * math.exp(x) - math.exp(x) + 1) / x**2),
    (moments.k, lambda x: ((math.exp(2 * x) - 1) / 2 - x * math.exp(x)) / x**3),
])
def test_series_helpers_join_smoothly(f, g):
    for x in (0.5, 0.7, -0.6, 2.0, -3.0):
        assert math.isclose(f(x), g(x), rel_tol=1e-12)
    # both sides of the series switch agree
    assert math.isclose(f(0.4999999), f(0.5000001), rel_tol=1e-6)


def test_series_limits():
    assert moments.phi1(0.0) == 1.0
    assert moments.phi2(0.0) == 0.5
    assert moments.h(0.0) == 0.5
    assert math.isclose(moments.k(0.0), 2.0 / 3.0 - 0.5, rel_tol=1e-15)


def test_lbdp_moments_closed_form():
    spec = ModelSpec.linear((2.0,), (1.0,))
    r = moments.glbdp_moments(spec, 1.0)
    assert math.isclose(r["mean_N"], math.e, rel_tol=1e-15)
    assert math.isclose(r["var_N"], 3.0 * (math.e**2 - math.e), rel_tol=1e-13)


def test_cov_routes_agree():
    for lam, mu in [((2.0,), (1.0,)), ((1.0, 0.5), (0.5, 0.25)), ((0.5,), (1.0, 0.3))]:
        spec = ModelSpec.linear(lam, mu)
        for t in (0.3, 1.0, 2.5):
            a = moments.cov_births_deaths(spec, t)["cov_DB"]
            b = moments.cov_births_deaths(spec, t, route="identity")["cov_DB"]
            c = moments.cov_births_deaths_raw(spec, t)
            assert abs(a - b) <= 1e-12 * max(1.0, abs(a))
            assert abs(a - c) <= 1e-9 * max(1.0, abs(a))


def test_k2_two_moments_deviate_from_guarded_chain():
    # the closed forms assume deaths may exceed the population; the chain does not
    spec = ModelSpec.linear((1.0, 0.5), (0.5, 0.25))
    exact = kolmogorov.solve_state_probabilities(spec, 1, [1.0])[0].mean()
    assert exact - moments.glbdp_moments(spec, 1.0)["mean_N"] > 0.4


def test_constant_sigma_is_psd_and_consistent():
    spec = ModelSpec.constant((1.0, 0.5), (0.5, 0.25))
    rep, sigma = moments.constant_moments(spec, 2.0)
    import numpy as np

    assert np.all(np.linalg.eigvalsh(sigma) >= -1e-12)
    # N = 1 + B - 1 - D, so Var N = Var B + Var D - 2 Cov(D, B)
    assert math.isclose(rep["var_N"], rep["var_B"] + rep["var_D"], rel_tol=1e-14)


def test_constant_path_integral_variance_nonnegative():
    spec = ModelSpec.constant((0.0, 2.0), (1.0,))
    assert moments.path_integral_moments_constant(spec, 3.0)["var_X"] >= 0


def test_immigration_everywhere_matches_solver():
    spec = ModelSpec.immigration_all((0.5, 0.25), (1.5,), 0.6)
    for t in (0.5, 2.0):
        ref = kolmogorov.solve_state_probabilities(spec, 1, [t])[0].mean()
        assert abs(moments.immigration_mean(spec, t) - ref) <= 1e-6
    assert moments.immigration_mean_limit(spec) == pytest.approx(2 * 3 * 0.6 / (2 * 0.5))


def test_immigration_zero_needs_curve():
    with pytest.raises(DependencyError):
        moments.immigration_mean(ModelSpec.immigration_zero((1.0,), (1.0,), 0.3), 1.0)


def test_limit_report_signs():
    assert moments.limit_report(ModelSpec.linear((1.0,), (2.0,))) == {"mean_N": 0.0, "mean_B": 2.0}
    assert moments.limit_report(ModelSpec.linear((1.0,), (1.0,)))["mean_N"] == 1.0
    assert moments.limit_report(ModelSpec.linear((2.0,), (1.0,)))["mean_N"] == math.inf


def test_variant_checks():
    with pytest.raises(UnsupportedVariantError):
        moments.glbdp_moments(ModelSpec.constant((1.0,), (1.0,)), 1.0)
    with pytest.raises(UnsupportedVariantError):
        moments.parking_means(ModelSpec.linear((1.0,), (1.0,)), 1.0)


def test_correlation_undefined_at_zero():
    r = moments.birth_moments(ModelSpec.linear((2.0,), (1.0,)), 0.0)
    assert math.isnan(r["corr_BN"])


@given(lam=st.floats(0.05, 3.0), mu=st.floats(0.05, 3.0), t=st.floats(0.01, 3.0))
@settings(max_examples=80, deadline=None)
def test_linear_identities(lam, mu, t):
    spec = ModelSpec.linear((lam,), (mu,))
    r = moments.linear_report(spec, t).values
    # N = B - D: Var N = Var B + Var D - 2 Cov(D, B)
    assert math.isclose(r["var_N"], r["var_B"] + r["var_D"] - 2 * r["cov_DB"], rel_tol=1e-9, abs_tol=1e-12)
    assert math.isclose(r["mean_N"], r["mean_B"] - r["mean_D"], rel_tol=1e-12)
    assert -1 - 1e-12 <= r["corr_NX"] <= 1 + 1e-12


@given(K=st.integers(3, 40), lam=st.floats(0.01, 2.0), mu=st.floats(0.01, 2.0), t=st.floats(0.0, 20.0))
@settings(max_examples=80, deadline=None)
def test_parking_means_bounded(K, lam, mu, t):
    m = moments.parking_means(ModelSpec.parking((lam,), (mu,), K), t)
    assert 0 <= m.E_N < K
    assert math.isclose(m.E_N, m.E_A - m.E_D, rel_tol=1e-9, abs_tol=1e-12)
    assert 0 <= m.O <= K
