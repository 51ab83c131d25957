import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbdp import DomainError, UnsupportedVariantError, extinction, kolmogorov
from gbdp.model import ModelSpec


def test_psi_coefficients_layout():
    spec = ModelSpec.linear((1.0, 0.5), (0.5, 0.25))
    # 0.5 u^4 + 1 u^3 - 2.25 u^2 + 0.5 u + 0.25
    assert list(extinction.psi_coefficients(spec)) == [0.5, 1.0, -2.25, 0.5, 0.25]


def test_unit_root_and_residues_sum():
    a = extinction.analyze(ModelSpec.linear((1.0, 0.5), (1.0,)))
    assert np.any(a.roots == 1.0)
    assert abs(a.psi(1.0)) == 0.0
    assert a.distinct
    # partial fractions of u^{k2-1} / psi(u): residues sum to 0 when deg psi >= k2 + 1
    assert abs(a.residues.sum()) <= 1e-12
    assert abs(a.epsilon - (math.sqrt(17) - 3) / 2) <= 1e-12


def test_epsilon_matches_ode_plateau_for_single_death_size():
    spec = ModelSpec.linear((1.0, 0.5), (1.0,))
    eps = extinction.analyze(spec).epsilon
    # supercritical: mass escaping a wide window essentially never returns to 0
    opts = kolmogorov.SolveOptions(fixed_window=300)
    p = kolmogorov.solve_state_probabilities(spec, 1, [40.0], opts)[0].prob(0)
    assert abs(eps - p) <= 1e-6


def test_g_function_identity():
    a = extinction.analyze(ModelSpec.linear((2.0,), (1.0,)))
    # roots 0.5 and 1, g(u) = (u - 0.5)^{-c0} (u - 1)^{-c1}
    u = 0.2
    expect = 1.0
    for r, c in zip(a.roots, a.residues):
        expect *= complex(u - r) ** (-c)
    assert abs(extinction.g_function(a, u) - expect) <= 1e-12


def test_lbdp_transient_extinction():
    spec = ModelSpec.linear((1.0,), (1.0,))
    assert abs(extinction.transient_extinction(spec, 2.0) - 2.0 / 3.0) <= 1e-7
    assert abs(extinction.lbdp_p0(2.0, 1.0, 1.0) - (1 - math.exp(-1)) / (2 - math.exp(-1))) <= 1e-15


def test_laplace_reduces_and_is_monotone():
    spec = ModelSpec.linear((0.5,), (1.0,))
    vals = [extinction.hitting_time_laplace(spec, 2, th) for th in (0.0, 0.5, 1.0, 4.0)]
    assert abs(vals[0] - 1.0) <= 1e-6
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert extinction.hitting_time_laplace(spec, 2, 1.0) < extinction.hitting_time_laplace(spec, 1, 1.0)


def test_laplace_branching_at_theta_zero():
    # independent lines: Pr(extinction from k) = eps^k
    spec = ModelSpec.linear((2.0,), (1.0,))
    for k in (1, 2, 3):
        assert abs(extinction.hitting_time_laplace(spec, k, 0.0) - 0.5**k) <= 1e-8


def test_laplace_pure_death_closed_form():
    # only deaths at rate n mu: Z_1 ~ Exp(mu)
    spec = ModelSpec.from_table([dict(n=1, size=1, kind="death", rate=2.0)])
    assert abs(extinction.hitting_time_laplace(spec, 1, 3.0) - 2.0 / 5.0) <= 1e-12


def test_laplace_identity_weight():
    # with g(u) = u and one progenitor, W_1 on the pure-death chain is Exp(mu) as well
    spec = ModelSpec.linear((1e-300,), (2.0,))
    val = extinction.hitting_time_laplace(spec, 1, 3.0, g_weight=lambda n: float(n))
    assert abs(val - 0.4) <= 1e-8


def test_errors():
    with pytest.raises(UnsupportedVariantError):
        extinction.analyze(ModelSpec.constant((1.0,), (1.0,)))
    with pytest.raises(DomainError):
        extinction.hitting_time_laplace(ModelSpec.immigration_zero((1.0,), (1.0,), 0.2), 1, 1.0)
    with pytest.raises(DomainError):
        extinction.hitting_time_laplace(ModelSpec.linear((1.0,), (1.0,)), 1, -1.0)


@given(lam=st.floats(0.05, 4.0), mu=st.floats(0.05, 4.0))
@settings(max_examples=80, deadline=None)
def test_single_size_epsilon(lam, mu):
    eps = extinction.analyze(ModelSpec.linear((lam,), (mu,))).epsilon
    assert math.isclose(eps, min(1.0, mu / lam), rel_tol=1e-9)


@given(c=st.floats(0.1, 10.0))
@settings(max_examples=40, deadline=None)
def test_epsilon_scale_invariant(c):
    a = extinction.analyze(ModelSpec.linear((1.0, 0.5), (1.0, 0.2))).epsilon
    b = extinction.analyze(ModelSpec.linear((c, 0.5 * c), (c, 0.2 * c))).epsilon
    assert math.isclose(a, b, rel_tol=1e-9)
