"""Exact laws of the constant-rate process.

With constant rates the births of size ``i`` form independent Poisson
streams, so ``B - 1 = S+ = sum_i i*x_i`` and ``D = S- = sum_j j*y_j`` with
``x_i ~ Poisson(lam_i t)`` and ``y_j ~ Poisson(mu_j t)``, all independent,
and ``N = 1 + S+ - S-``.  These laws describe the walk on the integers (the
default lattice of :meth:`ModelSpec.constant`): nothing stops ``N`` from
going negative.  Pmfs are built by convolving truncated scaled Poisson laws.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from .errors import DomainError, SingularInputError, UnsupportedVariantError
from .model import INTEGERS, ModelSpec, Variant


@dataclass(frozen=True)
class LatticeLaw:
    """Law on ``offset, offset + 1, ...``; ``tail_bound`` is the truncated mass."""

    offset: int
    weights: np.ndarray
    tail_bound: float

    def pmf(self, k: int) -> float:
        i = int(k) - self.offset
        return float(self.weights[i]) if 0 <= i < len(self.weights) else 0.0

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + len(self.weights))

    def mean(self) -> float:
        return float(self.weights @ self.support)

    def variance(self) -> float:
        m = self.mean()
        return float(self.weights @ (self.support - m) ** 2)


def _require_constant(spec):
    if spec.variant is not Variant.CONSTANT:
        raise UnsupportedVariantError("closed forms exist for the constant-rate model only")
    if spec.lattice != INTEGERS:
        raise UnsupportedVariantError(
            "closed forms describe the walk on the integers; build the model with lattice='integers'"
        )


def _check_t(t):
    t = float(t)
    if not t >= 0 or not math.isfinite(t):
        raise DomainError("t must be finite and nonnegative")
    return t


def _scaled_poisson(rate, size, tol):
    """Law of ``size * Poisson(rate)`` truncated to tail mass <= ``tol``."""
    if rate == 0:
        return np.ones(1), 0.0
    # isf returns nan for tail targets near double-precision resolution
    kmax = max(int(poisson.isf(max(tol, 1e-15), rate)), 0)
    while poisson.sf(kmax, rate) > tol:
        kmax += 1
    w = np.zeros(size * kmax + 1)
    w[::size] = poisson.pmf(np.arange(kmax + 1), rate)
    return w, float(poisson.sf(kmax, rate))


def compound_law(rates, t: float, tol: float) -> LatticeLaw:
    """Law of ``sum_i i * Poisson(rates[i-1] * t)`` with total truncation <= ``tol``."""
    t = _check_t(t)
    rates = [float(r) for r in rates]
    per = tol / max(len(rates), 1)
    w = np.ones(1)
    log_keep = 0.0
    for i, r in enumerate(rates, 1):
        comp, tail = _scaled_poisson(r * t, i, per)
        w = np.convolve(w, comp)
        log_keep += math.log1p(-tail)
    w = np.clip(w, 0.0, None)
    return LatticeLaw(0, w, -math.expm1(log_keep))


def births_law(spec: ModelSpec, t: float, tol: float = 1e-15) -> LatticeLaw:
    """Law of ``S+ = B*(t) - 1``."""
    _require_constant(spec)
    return compound_law(spec.lam, t, tol)


def deaths_law(spec: ModelSpec, t: float, tol: float = 1e-15) -> LatticeLaw:
    """Law of ``S- = D*(t)``."""
    _require_constant(spec)
    return compound_law(spec.mu, t, tol)


def state_law(spec: ModelSpec, t: float, tol: float = 1e-12) -> LatticeLaw:
    """Law of ``N*(t) = 1 + S+ - S-``."""
    _require_constant(spec)
    k = len(spec.lam) + len(spec.mu)
    per = tol / max(k, 1)
    plus = compound_law(spec.lam, t, per * len(spec.lam))
    minus = compound_law(spec.mu, t, per * len(spec.mu))
    w = np.convolve(plus.weights, minus.weights[::-1])
    offset = 1 + plus.offset - (minus.offset + len(minus.weights) - 1)
    keep = (1.0 - plus.tail_bound) * (1.0 - minus.tail_bound)
    return LatticeLaw(offset, np.clip(w, 0.0, None), 1.0 - keep)


def constant_pmf(spec: ModelSpec, n: int, t: float, tol: float = 1e-12) -> float:
    """``Pr{N*(t) = n}`` to absolute error ``tol``."""
    return state_law(spec, t, tol).pmf(n)


def constant_joint_pmf(spec: ModelSpec, d: int, b: int, n: int, t: float, tol: float = 1e-12) -> float:
    """``Pr{D*(t) = d, B*(t) = b, N*(t) = n}``; zero off the plane ``b - d = n``."""
    _require_constant(spec)
    _check_t(t)
    if b - d != n or b < 1 or d < 0:
        return 0.0
    return deaths_law(spec, t, tol / 2).pmf(d) * births_law(spec, t, tol / 2).pmf(b - 1)


def marginal_births(spec: ModelSpec, b: int, t: float, tol: float = 1e-12) -> float:
    """``Pr{B*(t) = b}``; births include the progenitor, so ``b >= 1``."""
    return births_law(spec, t, tol).pmf(int(b) - 1)


def marginal_deaths(spec: ModelSpec, d: int, t: float, tol: float = 1e-12) -> float:
    return deaths_law(spec, t, tol).pmf(int(d))


def _exponent(spec, u):
    s = 0j
    for i, lam in enumerate(spec.lam, 1):
        s += lam * (u**i - 1)
    for j, mu in enumerate(spec.mu, 1):
        s += mu * (u ** (-j) - 1)
    return s


def _maybe_real(z, *args):
    if all(not isinstance(a, complex) for a in args):
        return z.real
    return z


def pgf_constant(spec: ModelSpec, u, t: float):
    """``E u^{N*(t)}``, a Laurent series in ``u``.

    ``u = 0`` is a pole whenever a death rate is positive and is rejected.
    """
    _require_constant(spec)
    t = _check_t(t)
    if u == 0:
        if any(m > 0 for m in spec.mu) and t > 0:
            raise SingularInputError("the pgf has a pole at u = 0 when deaths are possible")
        # without deaths N >= 1, so the pgf vanishes at 0
        return 0.0
    z = u * cmath.exp(_exponent(spec, complex(u)) * t)
    return _maybe_real(z, u)


def pgf_coefficients(spec: ModelSpec, t: float, n_lo: int, n_hi: int, points: int = 512):
    """Coefficients of ``u^n`` for ``n_lo <= n <= n_hi`` by a trapezoidal Cauchy integral."""
    _require_constant(spec)
    k = np.arange(points)
    u = np.exp(2j * np.pi * k / points)
    vals = np.array([pgf_constant(spec, complex(x), t) for x in u])
    out = {}
    for n in range(n_lo, n_hi + 1):
        out[n] = float(np.mean(vals * u ** (-n)).real)
    return out


def joint_pgf_constant(spec: ModelSpec, u, v, w, t: float):
    """``E u^{D*} v^{B*} w^{N*}`` at time ``t``."""
    _require_constant(spec)
    t = _check_t(t)
    if w == 0:
        raise SingularInputError("w = 0 is a pole of the joint pgf")
    s = 0j
    for i, lam in enumerate(spec.lam, 1):
        s += lam * ((v * w) ** i - 1)
    for j, mu in enumerate(spec.mu, 1):
        s += mu * ((u / w) ** j - 1)
    z = v * w * cmath.exp(s * t)
    return _maybe_real(z, u, v, w)


def path_integral_pgf_constant(spec: ModelSpec, u: float, v: float, t: float) -> float:
    """``E u^{N*(t)} v^{X*(t)}`` with ``X*(t) = int_0^t N*(s) ds``.

    Solves ``G_t = ln(v) u G_u + R(u) G`` with ``G(u, v, 0) = u`` and
    ``R(u) = sum lam_i (u^i - 1) + sum mu_j (u^-j - 1)``:

        G = u v^t exp( sum lam_i u^i (v^{it} - 1) / (i ln v)
                       - sum mu_j u^-j (v^{-jt} - 1) / (j ln v) - Lambda t ).

    No term is singular at ``j = 1``.  ``v = 1`` is a removable singularity
    of this representation and is rejected; the limit is :func:`pgf_constant`.
    """
    _require_constant(spec)
    t = _check_t(t)
    u = float(u)
    v = float(v)
    if not (0 < u <= 1) or not (0 < v <= 1):
        raise DomainError("path-integral pgf needs 0 < u <= 1 and 0 < v <= 1")
    if v == 1.0:
        raise SingularInputError("v = 1: use pgf_constant for the marginal of N")
    lv = math.log(v)
    s = 0.0
    for i, lam in enumerate(spec.lam, 1):
        s += lam * u**i * math.expm1(i * t * lv) / (i * lv)
    for j, mu in enumerate(spec.mu, 1):
        s -= mu * u ** (-j) * math.expm1(-j * t * lv) / (j * lv)
    Lam = math.fsum(spec.lam) + math.fsum(spec.mu)
    return u * math.exp(t * lv + s - Lam * t)
