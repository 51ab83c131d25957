"""Exact simulation of sample paths and Monte Carlo aggregation.

Randomness comes from numpy's counter-based Philox generator.  A trajectory
is identified by ``(seed, stream)``: the key is ``[seed, 0]`` and the counter
starts at ``[0, 0, 0, stream]``.  Replication ``r`` of a Monte Carlo run with
``base_seed`` uses stream ``r``, so results do not depend on how the work is
split across threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._backend import kernels
from .errors import DomainError
from .model import EventDescriptor, ModelSpec, Variant, _check_state

DEFAULT_MAX_JUMPS = 10**7
_NAMES = ("N", "B", "D", "X")


@dataclass(frozen=True)
class Censored:
    """Marker for a hitting time that was not observed by ``horizon``."""

    horizon: float

    def __bool__(self):
        return False


@dataclass(frozen=True, eq=False)
class Trajectory:
    initial_state: int
    jump_times: np.ndarray
    increments: np.ndarray
    horizon: float
    seed: int = 0
    stream: int = 0
    capped: bool = False

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=np.float64)
        inc = np.asarray(self.increments, dtype=np.int64)
        if jt.shape != inc.shape or jt.ndim != 1:
            raise DomainError("jump_times and increments must be aligned vectors")
        if jt.size and (np.any(np.diff(jt) <= 0) or jt[0] < 0 or jt[-1] > self.horizon):
            raise DomainError("jump times must be strictly increasing within [0, horizon]")
        if np.any(inc == 0):
            raise DomainError("every event must change the state")
        jt.flags.writeable = False
        inc.flags.writeable = False
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "increments", inc)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.initial_state == other.initial_state
            and self.horizon == other.horizon
            and np.array_equal(self.jump_times, other.jump_times)
            and np.array_equal(self.increments, other.increments)
        )

    @property
    def events(self) -> list[EventDescriptor]:
        return [EventDescriptor.from_increment(int(i)) for i in self.increments]

    @property
    def states(self) -> np.ndarray:
        """State occupied from each epoch on: ``[n0, n after jump 1, ...]``."""
        return self.initial_state + np.concatenate(([0], np.cumsum(self.increments)))

    @property
    def epochs(self) -> np.ndarray:
        return np.concatenate(([0.0], self.jump_times))

    @property
    def final_state(self) -> int:
        return int(self.initial_state + self.increments.sum())

    def completed_sojourns(self):
        """``(state, duration)`` for every sojourn ended by a jump."""
        return self.states[:-1], np.diff(self.epochs)


@dataclass(frozen=True)
class PathFunctionals:
    query_times: np.ndarray
    population: np.ndarray
    cumulative_births: np.ndarray
    cumulative_deaths: np.ndarray
    path_integral: np.ndarray

    def as_table(self) -> np.ndarray:
        return np.column_stack(
            [self.query_times, self.population, self.cumulative_births,
             self.cumulative_deaths, self.path_integral]
        )


@dataclass(frozen=True)
class HittingSample:
    Z: float
    W: float
    censored: bool


@dataclass(frozen=True)
class Estimate:
    mean: float
    variance: float
    se: float


@dataclass
class MonteCarloSummary:
    """Sample moments of ``N, B, D, X`` (``X`` integrates ``g(u) = u``).

    ``estimates`` is keyed by ``(name, t)`` and ``covariances`` by
    ``((a, t), (b, t))`` for pairs observed at the same time.
    """

    replications: int
    query_times: np.ndarray
    samples: np.ndarray = field(repr=False)
    estimates: dict = field(default_factory=dict)
    covariances: dict = field(default_factory=dict)
    capped: int = 0

    def column(self, name: str, t: float) -> np.ndarray:
        return self.samples[:, self._t_index(t), _NAMES.index(name)]

    def _t_index(self, t):
        idx = np.flatnonzero(np.isclose(self.query_times, t, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise DomainError(f"time {t} was not a query time")
        return int(idx[0])

    def mean(self, name, t) -> Estimate:
        return self.estimates[(name, float(self.query_times[self._t_index(t)]))]

    def cov(self, a, b, t) -> float:
        tt = float(self.query_times[self._t_index(t)])
        return self.covariances[((a, tt), (b, tt))]

    def cov_se(self, a, b, t) -> float:
        """Delta-method standard error of the sample covariance."""
        x = self.column(a, t)
        y = self.column(b, t)
        prod = (x - x.mean()) * (y - y.mean())
        return float(prod.std(ddof=1) / math.sqrt(len(x)))

    def corr(self, a, b, t) -> float:
        x = self.column(a, t)
        y = self.column(b, t)
        return float(np.corrcoef(x, y)[0, 1])


def _check_seed(seed):
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise DomainError("seed must be a 64-bit unsigned integer")
    return seed


def simulate_trajectory(
    spec: ModelSpec,
    n0: int,
    horizon: float,
    seed: int,
    *,
    stream: int = 0,
    max_jumps: int = DEFAULT_MAX_JUMPS,
) -> Trajectory:
    """Simulate one path on ``[0, horizon]``.

    Sojourns are exponential with the total exit rate; the event is then
    picked with probability rate/total.  An absorbing state ends the event
    stream.  Reproducible for fixed ``(spec, n0, horizon, seed, stream)``.
    """
    horizon = float(horizon)
    if not horizon > 0 or math.isnan(horizon):
        raise DomainError("horizon must be positive")
    _check_state(spec, int(n0))
    seed = _check_seed(seed)
    times, incs, capped = kernels.simulate_path(
        spec.kernel_params(), int(n0), horizon, seed, int(stream), int(max_jumps)
    )
    # a capped run is only known up to its last jump
    h = float(times[-1]) if capped and len(times) else horizon
    return Trajectory(int(n0), times, incs, h, seed, int(stream), bool(capped))


def _weights(g, states):
    uniq, inv = np.unique(states, return_inverse=True)
    w = np.array([float(g(int(s))) for s in uniq], dtype=np.float64)
    return w[inv]


def functionals(
    traj: Trajectory, g: Callable[[int], float] | None, query_times: Sequence[float]
) -> PathFunctionals:
    """Evaluate ``N, B, D`` and ``X = int_0^t g(N(s)) ds`` at the query times.

    ``X`` is the exact piecewise-constant integral.  ``g=None`` means
    ``g(u) = u``.  ``B`` counts the initial individuals.
    """
    q = np.atleast_1d(np.asarray(query_times, dtype=np.float64))
    if np.any(q < 0) or np.any(q > traj.horizon) or np.any(np.isnan(q)):
        raise DomainError("query times must lie in [0, horizon]")
    epochs = traj.epochs
    states = traj.states
    gv = states.astype(np.float64) if g is None else _weights(g, states)
    seg = gv[:-1] * np.diff(epochs)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    k = np.searchsorted(epochs, q, side="right") - 1
    X = cum[k] + gv[k] * (q - epochs[k])
    pos = np.concatenate(([0], np.cumsum(np.clip(traj.increments, 0, None))))
    neg = np.concatenate(([0], np.cumsum(np.clip(-traj.increments, 0, None))))
    B = traj.initial_state + pos[k]
    D = neg[k]
    return PathFunctionals(q, states[k], B, D, X)


def hitting_time(traj: Trajectory):
    """First entrance time to state 0, or :class:`Censored`."""
    if traj.initial_state == 0:
        return 0.0
    hits = np.flatnonzero(traj.states[1:] == 0)
    if hits.size:
        return float(traj.jump_times[hits[0]])
    return Censored(traj.horizon)


def _require_absorbing_zero(spec):
    if spec.variant is Variant.PARKING:
        return
    if not spec.zero_is_absorbing:
        raise DomainError("hitting times need state 0 to be absorbing (no immigration at 0)")


def sample_hitting_functional(
    spec: ModelSpec,
    k: int,
    g: Callable[[int], float] | str | None = None,
    seed: int = 0,
    *,
    stream: int = 0,
    max_jumps: int = DEFAULT_MAX_JUMPS,
) -> HittingSample:
    """One draw of ``(Z_k, W_k)`` with ``W_k = int_0^{Z_k} g(N(t)) dt``.

    ``g`` may be a callable, ``None`` or ``"one"`` for ``g = 1``, or
    ``"identity"`` for ``g(u) = u``.  Runs past ``max_jumps`` (or stuck in a
    nonzero absorbing state) come back censored with infinite ``Z`` and ``W``.
    """
    _require_absorbing_zero(spec)
    _check_state(spec, int(k))
    seed = _check_seed(seed)
    if k == 0:
        return HittingSample(0.0, 0.0, False)
    if g is None or isinstance(g, str):
        mode = {None: 0, "one": 0, "identity": 1}.get(g)
        if mode is None:
            raise DomainError(f"unknown weight {g!r}")
        Z, W, c = kernels.hitting_batch(
            spec.kernel_params(), int(k), mode, seed, int(stream), 1, int(max_jumps)
        )
        return HittingSample(float(Z[0]), float(W[0]), bool(c[0]))
    times, incs, capped = kernels.simulate_path(
        spec.kernel_params(), int(k), math.inf, seed, int(stream), int(max_jumps)
    )
    states = int(k) + np.concatenate(([0], np.cumsum(incs)))
    hits = np.flatnonzero(states[1:] == 0)
    if hits.size == 0:
        return HittingSample(math.inf, math.inf, True)
    last = hits[0] + 1
    epochs = np.concatenate(([0.0], times[:last]))
    w = _weights(g, states[:last])
    return HittingSample(float(epochs[-1]), float(np.sum(w * np.diff(epochs))), False)


def _threads(threads):
    if threads is None:
        threads = int(os.environ.get("GBDP_THREADS", "1") or 1)
    return max(1, int(threads))


def _chunks(M, threads):
    n = min(M, max(1, threads * 4)) if threads > 1 else 1
    bounds = np.linspace(0, M, n + 1).astype(int)
    return [(int(a), int(b - a)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_chunks(fn, M, threads):
    chunks = _chunks(M, threads)
    if threads == 1:
        return [fn(s, m) for s, m in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))


def sample_hitting_batch(
    spec: ModelSpec,
    k: int,
    M: int,
    weight: str = "one",
    base_seed: int = 0,
    *,
    threads: int | None = None,
    max_jumps: int = DEFAULT_MAX_JUMPS,
):
    """``M`` independent ``(Z_k, W_k)`` draws; returns ``(Z, W, censored)`` arrays."""
    _require_absorbing_zero(spec)
    _check_state(spec, int(k))
    base_seed = _check_seed(base_seed)
    mode = {"one": 0, "identity": 1}.get(weight)
    if mode is None:
        raise DomainError(f"unknown weight {weight!r}")
    params = spec.kernel_params()
    parts = _run_chunks(
        lambda s, m: kernels.hitting_batch(params, int(k), mode, base_seed, s, m, int(max_jumps)),
        int(M),
        _threads(threads),
    )
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def monte_carlo(
    spec: ModelSpec,
    n0: int,
    horizon: float,
    M: int,
    query_times: Sequence[float] | None = None,
    functionals: Sequence[str] = _NAMES,
    base_seed: int = 0,
    *,
    threads: int | None = None,
    max_jumps: int = DEFAULT_MAX_JUMPS,
) -> MonteCarloSummary:
    """Run ``M`` replications and summarize the requested functionals.

    Replication ``r`` uses stream ``r`` of ``base_seed``, so every replication
    has a distinct seed and the result is identical for any thread count.
    """
    if M < 2:
        raise DomainError("monte_carlo needs M >= 2")
    horizon = float(horizon)
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    _check_state(spec, int(n0))
    base_seed = _check_seed(base_seed)
    q = np.atleast_1d(np.asarray([horizon] if query_times is None else query_times, dtype=float))
    if np.any(q < 0) or np.any(q > horizon) or np.any(np.diff(q) < 0):
        raise DomainError("query times must be increasing and within [0, horizon]")
    bad = set(functionals) - set(_NAMES)
    if bad:
        raise DomainError(f"unknown functionals {sorted(bad)}")
    params = spec.kernel_params()
    parts = _run_chunks(
        lambda s, m: kernels.observe_batch(params, int(n0), horizon, q, base_seed, s, m, int(max_jumps)),
        int(M),
        _threads(threads),
    )
    samples = np.concatenate([p[0] for p in parts], axis=0)
    capped = int(sum(p[1] for p in parts))
    summary = MonteCarloSummary(int(M), q, samples, capped=capped)
    names = [n for n in _NAMES if n in functionals]
    for ti, t in enumerate(q):
        block = samples[:, ti, [_NAMES.index(n) for n in names]]
        means = block.mean(axis=0)
        cov = np.atleast_2d(np.cov(block, rowvar=False, ddof=1))
        for a, na in enumerate(names):
            var = float(cov[a, a])
            summary.estimates[(na, float(t))] = Estimate(float(means[a]), var, math.sqrt(var / M))
            for b, nb in enumerate(names):
                summary.covariances[((na, float(t)), (nb, float(t)))] = float(cov[a, b])
    return summary
