import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbdp import DomainError, simulate
from gbdp.model import ModelSpec

SPEC = ModelSpec.linear((1.0, 0.5), (0.5, 0.25))


def test_reproducible_and_stream_distinct():
    a = simulate.simulate_trajectory(SPEC, 1, 2.0, 42)
    b = simulate.simulate_trajectory(SPEC, 1, 2.0, 42)
    c = simulate.simulate_trajectory(SPEC, 1, 2.0, 42, stream=1)
    assert a == b
    assert a != c


def test_trajectory_invariants():
    tr = simulate.simulate_trajectory(SPEC, 3, 5.0, 1)
    assert np.all(np.diff(tr.jump_times) > 0)
    assert np.all(tr.states >= 0)
    assert tr.final_state == tr.states[-1]
    assert not tr.jump_times.flags.writeable
    with pytest.raises(DomainError):
        simulate.Trajectory(1, [0.5], [0], 1.0)


def test_extinction_is_absorbing():
    spec = ModelSpec.linear((0.5,), (2.0,))
    tr = simulate.simulate_trajectory(spec, 1, 100.0, 3)
    assert tr.final_state == 0
    assert np.count_nonzero(tr.states == 0) == 1


def test_functionals_piecewise_integral():
    tr = simulate.Trajectory(2, np.array([1.0, 1.5]), np.array([1, -2]), 3.0)
    pf = simulate.functionals(tr, None, [0.0, 1.0, 1.25, 3.0])
    assert list(pf.population) == [2, 3, 3, 1]
    assert list(pf.cumulative_births) == [2, 3, 3, 3]
    assert list(pf.cumulative_deaths) == [0, 0, 0, 2]
    assert np.allclose(pf.path_integral, [0.0, 2.0, 2.75, 2.0 + 1.5 + 1.5])
    pf1 = simulate.functionals(tr, lambda n: 1.0, [3.0])
    assert pf1.path_integral[0] == 3.0


def test_hitting_time_and_censoring():
    tr = simulate.Trajectory(1, np.array([0.3, 0.7]), np.array([1, -2]), 2.0)
    assert simulate.hitting_time(tr) == 0.7
    tr2 = simulate.Trajectory(1, np.array([0.3]), np.array([1]), 2.0)
    h = simulate.hitting_time(tr2)
    assert isinstance(h, simulate.Censored) and not h


def test_hitting_functional_callable_matches_batch_mode():
    spec = ModelSpec.linear((0.5,), (1.0,))
    a = simulate.sample_hitting_functional(spec, 2, "identity", 5)
    b = simulate.sample_hitting_functional(spec, 2, lambda n: float(n), 5)
    assert a.Z == b.Z and math.isclose(a.W, b.W, rel_tol=1e-12)


def test_hitting_needs_absorbing_zero():
    with pytest.raises(DomainError):
        simulate.sample_hitting_functional(ModelSpec.immigration_zero((1.0,), (1.0,), 0.5), 1)


def test_monte_carlo_thread_invariance():
    a = simulate.monte_carlo(SPEC, 1, 1.0, 2000, [0.5, 1.0], base_seed=9, threads=1)
    b = simulate.monte_carlo(SPEC, 1, 1.0, 2000, [0.5, 1.0], base_seed=9, threads=4)
    assert np.array_equal(a.samples, b.samples)


def test_monte_carlo_matches_single_paths():
    s = simulate.monte_carlo(SPEC, 1, 1.0, 20, [1.0], base_seed=4)
    for r in (0, 7, 19):
        tr = simulate.simulate_trajectory(SPEC, 1, 1.0, 4, stream=r)
        pf = simulate.functionals(tr, None, [1.0])
        assert s.column("N", 1.0)[r] == pf.population[0]
        assert math.isclose(s.column("X", 1.0)[r], pf.path_integral[0], rel_tol=1e-12)


def test_bad_arguments():
    with pytest.raises(DomainError):
        simulate.simulate_trajectory(SPEC, 1, 0.0, 1)
    with pytest.raises(DomainError):
        simulate.simulate_trajectory(SPEC, -1, 1.0, 1)
    with pytest.raises(DomainError):
        simulate.simulate_trajectory(SPEC, 1, 1.0, -5)
    with pytest.raises(DomainError):
        simulate.monte_carlo(SPEC, 1, 1.0, 1)


@given(seed=st.integers(0, 2**32), n0=st.integers(0, 6))
@settings(max_examples=40, deadline=None)
def test_population_consistent_with_counts(seed, n0):
    tr = simulate.simulate_trajectory(SPEC, n0, 1.5, seed)
    pf = simulate.functionals(tr, None, [1.5])
    assert pf.population[0] == pf.cumulative_births[0] - pf.cumulative_deaths[0]
    assert pf.population[0] >= 0
