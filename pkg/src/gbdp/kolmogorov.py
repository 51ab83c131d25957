"""Truncated forward (Kolmogorov) equations.

Every solver works on a finite window of the state space plus one extra
sink state collecting the probability that has left the window.  The sink
is reported as the truncation deficit and never folded back into the pmf.
Windows grow by doubling until the deficit and the mass near the window
edge are both below ``deficit_tolerance`` at every requested time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.stats import poisson

from .errors import DomainError, NumericalToleranceError, TruncationError, UnsupportedVariantError
from .model import INTEGERS, ModelSpec, Variant, rate_arrays

EDGE = 5


@dataclass(frozen=True)
class SolveOptions:
    rtol: float = 1e-8
    atol: float = 1e-12
    deficit_tolerance: float = 1e-9
    max_states: int = 2**16
    initial_window: int | None = None
    fixed_window: int | None = None  # disables the adaptive growth
    backend: str = "rk45"  # or "uniformization" for parking state pmfs
    clamp_tolerance: float = 1e-12
    ode_method: str = "auto"  # "RK45", "BDF", or "auto" (BDF once the system is stiff)
    stiff_threshold: float = 500.0  # max exit rate times t_end above which "auto" picks BDF


@dataclass(frozen=True)
class TruncatedPmf:
    """Probabilities of states ``offset .. offset + len(probs) - 1`` at time ``t``."""

    t: float
    probs: np.ndarray
    deficit: float
    offset: int = 0

    @property
    def states(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + len(self.probs))

    def prob(self, n: int) -> float:
        k = int(n) - self.offset
        return float(self.probs[k]) if 0 <= k < len(self.probs) else 0.0

    def moment(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.probs, f(self.states.astype(np.float64))))

    def mean(self) -> float:
        return self.moment(lambda n: n)

    def variance(self) -> float:
        m = self.mean()
        return self.moment(lambda n: (n - m) ** 2)


@dataclass(frozen=True)
class JointPmfGrid:
    """Joint law on a lattice, stored as one row of coordinates per state.

    ``coords`` maps each axis name to an integer vector aligned with
    ``probs``; derived axes (``n = b - d`` on the full lattice) are included.
    """

    t: float
    axes: tuple[str, ...]
    coords: Mapping[str, np.ndarray]
    probs: np.ndarray
    deficit: float

    def expect(self, f: Callable[..., np.ndarray]) -> float:
        """``E f(**coords)`` with each axis passed as a float array."""
        kw = {k: v.astype(np.float64) for k, v in self.coords.items()}
        return float(np.dot(self.probs, f(**kw)))

    def mean(self, axis: str) -> float:
        return float(np.dot(self.probs, self.coords[axis]))

    def cov(self, a: str, b: str) -> float:
        x = self.coords[a] - self.mean(a)
        y = self.coords[b] - self.mean(b)
        return float(np.dot(self.probs, x * y))

    def var(self, a: str) -> float:
        return self.cov(a, a)

    def marginal(self, axis: str) -> TruncatedPmf:
        c = self.coords[axis]
        lo = int(c.min()) if c.size else 0
        p = np.bincount(c - lo, weights=self.probs)
        return TruncatedPmf(self.t, p, self.deficit, lo)

    def dense(self, axes: Sequence[str] | None = None):
        """Dense array over ``axes`` (default: the stored axes), plus their offsets."""
        axes = tuple(axes or self.axes)
        lows = [int(self.coords[a].min()) for a in axes]
        shape = [int(self.coords[a].max()) - lo + 1 for a, lo in zip(axes, lows)]
        out = np.zeros(shape)
        idx = tuple(self.coords[a] - lo for a, lo in zip(axes, lows))
        np.add.at(out, idx, self.probs)
        return out, lows

    def prob(self, **point) -> float:
        mask = np.ones(self.probs.shape, dtype=bool)
        for k, v in point.items():
            mask &= self.coords[k] == v
        return float(self.probs[mask].sum())


# -- lattice assembly -------------------------------------------------------


@dataclass
class _Lattice:
    """States of one window, the moves between them, and the generator."""

    names: tuple[str, ...]
    coords: np.ndarray  # (S, d)
    population: np.ndarray  # N of each state
    edge: np.ndarray  # boolean, within EDGE of the window boundary
    A: sp.csr_matrix = field(default=None)  # (S+1, S+1), last row/col is the sink

    @property
    def size(self):
        return self.coords.shape[0]


def _generator(coords, lookup, moves):
    """Sparse ``Q^T`` with a sink appended.

    ``lookup`` maps an ``(S, d)`` coordinate array to indices (``-1`` outside
    the window); ``moves`` is a list of ``(delta, rate_vector)``.
    """
    S = coords.shape[0]
    rows, cols, vals = [], [], []
    diag = np.zeros(S)
    src = np.arange(S)
    for delta, rate in moves:
        live = rate > 0
        if not live.any():
            continue
        tgt = lookup(coords[live] + np.asarray(delta)[None, :])
        tgt = np.where(tgt < 0, S, tgt)
        rows.append(tgt)
        cols.append(src[live])
        vals.append(rate[live])
        diag[live] -= rate[live]
    rows.append(src)
    cols.append(src)
    vals.append(diag)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    return sp.csr_matrix((v, (r, c)), shape=(S + 1, S + 1))


def _box_lookup(lows, highs, valid=None):
    lows = np.asarray(lows)
    highs = np.asarray(highs)
    shape = tuple(highs - lows + 1)
    table = -np.ones(shape, dtype=np.int64)
    grid = np.stack(np.meshgrid(*[np.arange(lo, hi + 1) for lo, hi in zip(lows, highs)], indexing="ij"), -1)
    grid = grid.reshape(-1, len(lows))
    if valid is not None:
        grid = grid[valid(grid)]
    table[tuple((grid - lows).T)] = np.arange(grid.shape[0])

    def lookup(c):
        inside = np.all((c >= lows) & (c <= highs), axis=1)
        out = -np.ones(c.shape[0], dtype=np.int64)
        ci = c[inside] - lows
        out[inside] = table[tuple(ci.T)]
        return out

    return grid, lookup


def _state_lattice(spec: ModelSpec, lo: int, hi: int) -> _Lattice:
    n = np.arange(lo, hi + 1)
    coords, lookup = _box_lookup([lo], [hi])
    b, d = rate_arrays(spec, n)
    moves = [((i,), b[:, i - 1]) for i in range(1, spec.k1 + 1)]
    moves += [((-j,), d[:, j - 1]) for j in range(1, spec.k2 + 1)]
    edge = n > hi - EDGE
    if spec.lattice == INTEGERS:
        edge |= n < lo + EDGE
    lat = _Lattice(("n",), coords, n, edge)
    lat.A = _generator(coords, lookup, moves)
    return lat


# -- integration --------------------------------------------------------------


def _check_times(times):
    t = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if t.size == 0 or np.any(t < 0) or np.any(np.diff(t) < 0) or not np.all(np.isfinite(t)):
        raise DomainError("times must be finite, nonnegative and nondecreasing")
    return t


def _integrate(A, y0, times, opts: SolveOptions, dense=False):
    """Solve ``y' = A y`` and return ``(Y, sol)`` with ``Y`` of shape (len(times), S+1)."""
    t_end = float(times[-1])
    if t_end == 0.0:
        return np.tile(y0, (len(times), 1)), None
    method = opts.ode_method
    if method == "auto":
        stiffness = float(np.max(np.abs(A.diagonal()))) * t_end
        method = "BDF" if stiffness > opts.stiff_threshold else "RK45"
    extra = {"jac": A} if method == "BDF" else {}
    sol = solve_ivp(
        lambda _t, y: A @ y,
        (0.0, t_end),
        y0,
        method=method,
        t_eval=times,
        rtol=opts.rtol,
        atol=opts.atol,
        dense_output=dense,
        **extra,
    )
    if not sol.success:
        raise NumericalToleranceError(f"integration failed: {sol.message}")
    return sol.y.T.copy(), sol


def _finish(Y, opts, what):
    """Clamp tiny negatives, check conservation, split off the sink."""
    body = Y[:, :-1]
    worst = float(body.min()) if body.size else 0.0
    if worst < -opts.clamp_tolerance:
        raise NumericalToleranceError(
            f"{what}: negative probability {worst:.3e} exceeds the clamp tolerance"
        )
    drift = np.abs(Y.sum(axis=1) - 1.0).max()
    if drift > 1e-9:
        raise NumericalToleranceError(f"{what}: mass drift {drift:.3e}")
    body = np.clip(body, 0.0, None)
    deficit = np.clip(1.0 - body.sum(axis=1), 0.0, None)
    return body, deficit


def _adaptive(build, y0_of, times, opts: SolveOptions, start: int, what: str, fixed=False):
    """Grow the window until the deficit and edge mass are small enough."""
    L = opts.fixed_window or start
    last = None
    while True:
        lat = build(L)
        if lat.size > opts.max_states:
            raise TruncationError(
                f"{what}: window of {lat.size} states exceeds max_states={opts.max_states}",
                diagnostics=last or {"window": L},
            )
        y0 = y0_of(lat)
        try:
            Y, _ = _integrate(lat.A, y0, times, opts)
            body, deficit = _finish(Y, opts, what)
        except NumericalToleranceError:
            if opts.atol > 1e-15:
                tight = replace(opts, atol=opts.atol * 1e-2)
                Y, _ = _integrate(lat.A, y0, times, tight)
                body, deficit = _finish(Y, tight, what)
            else:
                raise
        edge_mass = body[:, lat.edge].sum(axis=1)
        last = {
            "window": L,
            "states": lat.size,
            "deficit": float(deficit.max()),
            "edge_mass": float(edge_mass.max()),
        }
        if fixed or opts.fixed_window is not None:
            return lat, body, deficit
        tol = opts.deficit_tolerance
        if deficit.max() <= tol and edge_mass.max() <= tol:
            return lat, body, deficit
        L *= 2


def _init_vector(init, lo, hi):
    """Point mass, ``{n: p}`` mapping or array over ``0..``; returns a dense vector."""
    if isinstance(init, (int, np.integer)):
        init = {int(init): 1.0}
    elif not isinstance(init, Mapping):
        arr = np.asarray(init, dtype=np.float64)
        init = {i: float(p) for i, p in enumerate(arr) if p != 0}
    total = math.fsum(init.values())
    if abs(total - 1.0) > 1e-12 or any(p < 0 for p in init.values()):
        raise DomainError("initial distribution must be nonnegative and sum to 1")
    y = np.zeros(hi - lo + 2)
    for n, p in init.items():
        if not lo <= n <= hi:
            raise DomainError(f"initial state {n} outside the window")
        y[n - lo] += p
    return y


def _init_support(init):
    if isinstance(init, (int, np.integer)):
        return int(init), int(init)
    if isinstance(init, Mapping):
        keys = [int(k) for k, p in init.items() if p != 0]
    else:
        keys = [i for i, p in enumerate(np.asarray(init, dtype=float)) if p != 0]
    if not keys:
        raise DomainError("empty initial distribution")
    return min(keys), max(keys)


def _state_window(spec, init, L):
    lo_s, hi_s = _init_support(init)
    if spec.variant is Variant.PARKING:
        return 0, spec.capacity
    if spec.lattice == INTEGERS:
        return lo_s - L, hi_s + L
    if lo_s < 0:
        raise DomainError("negative initial state")
    return 0, hi_s + L


def solve_state_probabilities(
    spec: ModelSpec, init, times: Sequence[float], opts: SolveOptions | None = None
) -> list[TruncatedPmf]:
    """Transient pmf of ``N(t)`` at each requested time.

    ``init`` is a state (point mass), a ``{state: prob}`` mapping or a
    probability vector over ``0, 1, ...``.
    """
    opts = opts or SolveOptions()
    times = _check_times(times)
    if spec.variant is Variant.PARKING:
        lo, hi = 0, spec.capacity
        if _init_support(init)[1] > hi:
            raise DomainError("initial state exceeds the capacity")
        if opts.backend == "uniformization":
            return _uniformized(spec, init, times)
        lat = _state_lattice(spec, lo, hi)
        Y, _ = _integrate(lat.A, _init_vector(init, lo, hi), times, opts)
        body, deficit = _finish(Y, opts, "parking")
        return [TruncatedPmf(float(t), body[k], float(deficit[k]), 0) for k, t in enumerate(times)]
    if opts.backend != "rk45":
        raise DomainError("uniformization needs a finite chain (parking)")
    if spec.variant is Variant.TABLE:
        top = max(n for (n, _, _) in spec.table) + spec.k1 + 1
        start = max(top, 16)
    else:
        start = 64
    start = opts.initial_window or start

    def build(L):
        lo, hi = _state_window(spec, init, L)
        return _state_lattice(spec, lo, hi)

    def y0_of(lat):
        return _init_vector(init, int(lat.population[0]), int(lat.population[-1]))

    lat, body, deficit = _adaptive(build, y0_of, times, opts, start, "state probabilities")
    off = int(lat.population[0])
    return [TruncatedPmf(float(t), body[k], float(deficit[k]), off) for k, t in enumerate(times)]


def _uniformized(spec, init, times, tol=1e-12):
    lat = _state_lattice(spec, 0, spec.capacity)
    A = lat.A[:-1, :-1].tocsr()  # finite chain: the sink never receives mass
    q = float(-A.diagonal().min()) or 1.0
    P = sp.identity(A.shape[0], format="csr") + A / q
    y0 = _init_vector(init, 0, spec.capacity)[:-1]
    out = []
    for t in times:
        lam = q * float(t)
        kmax = int(poisson.isf(tol, lam)) + 1 if lam > 0 else 0
        w = poisson.pmf(np.arange(kmax + 1), lam)
        v = y0.copy()
        acc = w[0] * v
        for k in range(1, kmax + 1):
            v = P @ v
            acc += w[k] * v
        acc = np.clip(acc, 0.0, None)
        out.append(TruncatedPmf(float(t), acc, float(max(0.0, 1.0 - acc.sum())), 0))
    return out


def p0_curve(spec: ModelSpec, t_end: float, init=1, opts: SolveOptions | None = None):
    """Callable ``s -> Pr{N(s) = 0}`` on ``[0, t_end]`` from a dense-output solve."""
    opts = opts or SolveOptions()
    t_end = float(t_end)
    if t_end <= 0:
        return lambda s: float(_init_vector(init, 0, max(_init_support(init)[1], 0))[0])
    pmfs_window = solve_state_probabilities(spec, init, [t_end], opts)[0]
    hi = pmfs_window.offset + len(pmfs_window.probs) - 1
    lat = _state_lattice(spec, 0, hi)
    _, sol = _integrate(lat.A, _init_vector(init, 0, hi), np.array([t_end]), opts, dense=True)
    idx0 = 0

    def p0(s):
        s = np.asarray(s, dtype=np.float64)
        return sol.sol(s)[idx0]

    return p0


# -- joint lattices ---------------------------------------------------------------


def _require_linear(spec, what):
    if spec.variant is not Variant.LINEAR:
        raise UnsupportedVariantError(f"{what} is defined for the linear model only")


def _birth_lattice(spec, n0, L):
    """States ``(b, n)`` with ``0 <= n <= b``, ``n0 <= b <= n0 + L``."""
    coords, lookup = _box_lookup([n0, 0], [n0 + L, n0 + L], valid=lambda g: g[:, 1] <= g[:, 0])
    n = coords[:, 1]
    b, d = rate_arrays(spec, n)
    moves = [((i, i), b[:, i - 1]) for i in range(1, spec.k1 + 1)]
    moves += [((0, -j), d[:, j - 1]) for j in range(1, spec.k2 + 1)]
    lat = _Lattice(("b", "n"), coords, n, coords[:, 0] > n0 + L - EDGE)
    lat.A = _generator(coords, lookup, moves)
    return lat


def _death_lattice(spec, n0, L):
    """States ``(d, n)`` with ``0 <= d, n <= L + n0``."""
    top = n0 + L
    coords, lookup = _box_lookup([0, 0], [top, top])
    n = coords[:, 1]
    b, d = rate_arrays(spec, n)
    moves = [((0, i), b[:, i - 1]) for i in range(1, spec.k1 + 1)]
    moves += [((j, -j), d[:, j - 1]) for j in range(1, spec.k2 + 1)]
    edge = (coords[:, 0] > top - EDGE) | (coords[:, 1] > top - EDGE)
    lat = _Lattice(("d", "n"), coords, n, edge)
    lat.A = _generator(coords, lookup, moves)
    return lat


def _full_lattice(spec, n0, L):
    """States ``(b, d)`` with ``n = b - d >= 0`` and ``b <= n0 + L``."""
    coords, lookup = _box_lookup([n0, 0], [n0 + L, n0 + L], valid=lambda g: g[:, 1] <= g[:, 0])
    n = coords[:, 0] - coords[:, 1]
    b, d = rate_arrays(spec, n)
    moves = [((i, 0), b[:, i - 1]) for i in range(1, spec.k1 + 1)]
    moves += [((0, j), d[:, j - 1]) for j in range(1, spec.k2 + 1)]
    lat = _Lattice(("b", "d"), coords, n, coords[:, 0] > n0 + L - EDGE)
    lat.A = _generator(coords, lookup, moves)
    return lat


def _parking_lattice(spec, which, L):
    K = spec.capacity
    coords, lookup = _box_lookup([0, 0], [L, K])
    n = coords[:, 1]
    b, d = rate_arrays(spec, n)
    if which == "arrivals":
        moves = [((i, i), b[:, i - 1]) for i in range(1, spec.k1 + 1)]
        moves += [((0, -j), d[:, j - 1]) for j in range(1, spec.k2 + 1)]
    else:
        moves = [((0, i), b[:, i - 1]) for i in range(1, spec.k1 + 1)]
        moves += [((j, -j), d[:, j - 1]) for j in range(1, spec.k2 + 1)]
    lat = _Lattice(("a" if which == "arrivals" else "d", "n"), coords, n, coords[:, 0] > L - EDGE)
    lat.A = _generator(coords, lookup, moves)
    return lat


def _point(lat, point):
    y = np.zeros(lat.size + 1)
    hit = np.flatnonzero(np.all(lat.coords == np.asarray(point)[None, :], axis=1))
    y[hit[0]] = 1.0
    return y


def _grids(lat, body, deficit, times, extra=None):
    out = []
    for k, t in enumerate(times):
        coords = {name: lat.coords[:, i] for i, name in enumerate(lat.names)}
        if extra:
            coords.update(extra(lat))
        axes = tuple(coords)
        out.append(JointPmfGrid(float(t), axes, coords, body[k], float(deficit[k])))
    return out


def solve_joint_birth(spec, times, n0: int = 1, opts: SolveOptions | None = None):
    """Joint law of cumulative births ``B(t)`` (initial individuals included) and ``N(t)``."""
    _require_linear(spec, "the (b, n) system")
    opts = opts or SolveOptions()
    times = _check_times(times)
    lat, body, deficit = _adaptive(
        lambda L: _birth_lattice(spec, n0, L),
        lambda lat: _point(lat, (n0, n0)),
        times,
        opts,
        opts.initial_window or 32,
        "joint births",
    )
    return _grids(lat, body, deficit, times)


def solve_joint_death(spec, times, n0: int = 1, opts: SolveOptions | None = None):
    """Joint law of cumulative deaths ``D(t)`` and ``N(t)``."""
    _require_linear(spec, "the (d, n) system")
    opts = opts or SolveOptions()
    times = _check_times(times)
    lat, body, deficit = _adaptive(
        lambda L: _death_lattice(spec, n0, L),
        lambda lat: _point(lat, (0, n0)),
        times,
        opts,
        opts.initial_window or 32,
        "joint deaths",
    )
    return _grids(lat, body, deficit, times)


def solve_joint_full(spec, times, n0: int = 1, opts: SolveOptions | None = None):
    """Joint law of ``(D, B, N)``; stored on ``(b, d)`` with ``n = b - d`` derived."""
    _require_linear(spec, "the (d, b, n) system")
    opts = opts or SolveOptions()
    times = _check_times(times)
    lat, body, deficit = _adaptive(
        lambda L: _full_lattice(spec, n0, L),
        lambda lat: _point(lat, (n0, 0)),
        times,
        opts,
        opts.initial_window or 32,
        "joint births and deaths",
    )
    return _grids(lat, body, deficit, times, extra=lambda lat: {"n": lat.population})


def solve_parking_joint(spec, which: str, times, opts: SolveOptions | None = None):
    """Joint law of arrivals ``A(t)`` (or departures ``D(t)``) with occupancy ``N(t)``."""
    if spec.variant is not Variant.PARKING:
        raise UnsupportedVariantError("the parking joint system needs a parking model")
    if which not in ("arrivals", "departures"):
        raise DomainError("which must be 'arrivals' or 'departures'")
    opts = opts or SolveOptions()
    times = _check_times(times)
    lat, body, deficit = _adaptive(
        lambda L: _parking_lattice(spec, which, L),
        lambda lat: _point(lat, (0, 0)),
        times,
        opts,
        opts.initial_window or 32,
        "parking joint",
    )
    return _grids(lat, body, deficit, times)


# -- path-integral partial moments -----------------------------------------------------


@dataclass(frozen=True)
class PathIntegralMoments:
    """Moments of ``N(t)`` and ``X(t) = int_0^t g(N(s)) ds`` from partial moments."""

    t: float
    mean_N: float
    var_N: float
    mean_X: float
    var_X: float
    cov_NX: float
    deficit: float


def solve_path_integral_moments(
    spec: ModelSpec,
    times: Sequence[float],
    n0: int = 1,
    g: Callable[[np.ndarray], np.ndarray] | None = None,
    opts: SolveOptions | None = None,
) -> list[PathIntegralMoments]:
    """Exact (up to truncation) moments of the path integral.

    Integrates ``p_n``, ``m1_n = E[X 1{N=n}]`` and ``m2_n = E[X^2 1{N=n}]``
    jointly: ``m1' = Q^T m1 + g p`` and ``m2' = Q^T m2 + 2 g m1``.
    ``g`` acts on a float array of states; the default is ``g(u) = u``.
    """
    opts = opts or SolveOptions()
    times = _check_times(times)
    g = g or (lambda n: n)

    def build(L):
        lo, hi = _state_window(spec, n0, L)
        lat = _state_lattice(spec, lo, hi)
        A = lat.A
        S1 = A.shape[0]
        gv = np.append(g(lat.population.astype(np.float64)), 0.0)
        G = sp.diags(gv)
        Z = sp.csr_matrix((S1, S1))
        lat.A = sp.bmat([[A, Z, Z], [G, A, Z], [Z, 2 * G, A]], format="csr")
        lat._S1 = S1
        return lat

    def y0_of(lat):
        y = np.zeros(lat.A.shape[0])
        lo = int(lat.population[0])
        y[n0 - lo] = 1.0
        return y

    L = opts.fixed_window or opts.initial_window or 64
    while True:
        lat = build(L)
        if lat.size > opts.max_states:
            raise TruncationError("path-integral moments: window too large", {"window": L})
        Y, _ = _integrate(lat.A, y0_of(lat), times, opts)
        S1 = lat._S1
        p = Y[:, : S1 - 1]
        sink = Y[:, S1 - 1]
        edge = p[:, lat.edge].sum(axis=1)
        tol = opts.deficit_tolerance
        finite = spec.variant is Variant.PARKING  # 0..K is the whole chain
        if finite or opts.fixed_window is not None or (sink.max() <= tol and edge.max() <= tol):
            break
        L *= 2
    n = lat.population.astype(np.float64)
    out = []
    for k, t in enumerate(times):
        pk = np.clip(p[k], 0.0, None)
        m1 = Y[k, S1 : 2 * S1 - 1]
        m2 = Y[k, 2 * S1 : 3 * S1 - 1]
        EN = float(pk @ n)
        VN = float(pk @ n**2) - EN**2
        EX = float(m1.sum())
        VX = float(m2.sum()) - EX**2
        CNX = float(m1 @ n) - EN * EX
        out.append(PathIntegralMoments(float(t), EN, VN, EX, VX, CNX, float(max(0.0, sink[k]))))
    return out
