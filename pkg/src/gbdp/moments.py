"""Closed-form first and second moments.

Every ``eta``-branched expression is written through the entire functions

    phi1(x) = (e^x - 1) / x
    phi2(x) = (e^x - 1 - x) / x^2
    h(x)    = (x e^x - e^x + 1) / x^2
    k(x)    = ((e^{2x} - 1) / 2 - x e^x) / x^3

with ``x = eta * t``.  They are evaluated by Taylor series near 0, so the
``eta = 0`` branch and its neighbourhood come out of one code path.

The linear-model results assume at most one individual dies per event
(``k2 = 1``) or, more precisely, that every death size is always available.
With ``k2 >= 2`` the guard "no death larger than the population" makes the
drift nonlinear near 0 and these expressions become approximations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import DependencyError, DomainError, UnsupportedVariantError
from .model import ModelSpec, Variant, derived_constants

ETA_TOL = 1e-10
_SERIES_CUT = 0.5
_TERMS = 40


def _series(coef, x):
    s = 0.0
    p = 1.0
    for c in coef:
        s += c * p
        p *= x
    return s


_F = [math.factorial(n) for n in range(_TERMS + 4)]
_PHI1 = [1.0 / _F[n + 1] for n in range(_TERMS)]
_PHI2 = [1.0 / _F[n + 2] for n in range(_TERMS)]
_H = [(n + 1) / _F[n + 2] for n in range(_TERMS)]
_K = [(2.0 ** (n + 2) - (n + 3)) / _F[n + 3] for n in range(_TERMS)]


def phi1(x: float) -> float:
    if abs(x) < _SERIES_CUT:
        return _series(_PHI1, x)
    return math.expm1(x) / x


def phi2(x: float) -> float:
    if abs(x) < _SERIES_CUT:
        return _series(_PHI2, x)
    return (math.expm1(x) - x) / (x * x)


def h(x: float) -> float:
    if abs(x) < _SERIES_CUT:
        return _series(_H, x)
    return (x * math.exp(x) - math.expm1(x)) / (x * x)


def k(x: float) -> float:
    if abs(x) < _SERIES_CUT:
        return _series(_K, x)
    return (0.5 * math.expm1(2 * x) - x * math.exp(x)) / x**3


@dataclass
class MomentReport:
    t: float
    values: dict = field(default_factory=dict)
    branch: str = "eta!=0"

    def __getitem__(self, key):
        return self.values[key]

    def update(self, other: "MomentReport"):
        self.values.update(other.values)
        return self


def _corr(cov, va, vb):
    if va <= 0 or vb <= 0:
        return math.nan
    return max(-1.0, min(1.0, cov / math.sqrt(va * vb)))


def _check_t(t):
    t = float(t)
    if not t >= 0 or not math.isfinite(t):
        raise DomainError("t must be finite and nonnegative")
    return t


def _linear(spec, what):
    if spec.variant is not Variant.LINEAR:
        raise UnsupportedVariantError(f"{what} needs the linear model")
    return derived_constants(spec)


def _branch(eta):
    return "eta=0" if abs(eta) <= ETA_TOL else "eta!=0"


def _x(c, t):
    # inside the tolerance band the eta = 0 branch is used verbatim
    return 0.0 if abs(c.eta) <= ETA_TOL else c.eta * t


def glbdp_moments(spec: ModelSpec, t: float) -> MomentReport:
    """Mean ``e^{eta t}`` and variance ``zeta (e^{2 eta t} - e^{eta t}) / eta`` of ``N(t)``."""
    c = _linear(spec, "glbdp_moments")
    t = _check_t(t)
    x = _x(c, t)
    ex = math.exp(x)
    return MomentReport(
        t, {"mean_N": ex, "var_N": c.zeta * t * ex * phi1(x)}, _branch(c.eta)
    )


def birth_moments(spec: ModelSpec, t: float) -> MomentReport:
    """``E B``, ``Var B``, ``Cov(B, N)`` and their correlation; ``B(0) = 1``."""
    c = _linear(spec, "birth_moments")
    t = _check_t(t)
    x = _x(c, t)
    ex = math.exp(x)
    mean_B = 1.0 + c.a1 * t * phi1(x)
    cov_BN = ex * (c.a2 * t + c.a1 * c.zeta * t * t * phi2(x))
    var_B = c.a2 * t * phi1(x) + 2 * c.a1 * (c.a2 * t * t * h(x) + c.a1 * c.zeta * t**3 * k(x))
    var_N = c.zeta * t * ex * phi1(x)
    return MomentReport(
        t,
        {"mean_B": mean_B, "var_B": var_B, "cov_BN": cov_BN, "corr_BN": _corr(cov_BN, var_B, var_N)},
        _branch(c.eta),
    )


def death_moments(spec: ModelSpec, t: float) -> MomentReport:
    """``E D``, ``Var D``, ``Cov(D, N)`` and their correlation."""
    c = _linear(spec, "death_moments")
    t = _check_t(t)
    x = _x(c, t)
    ex = math.exp(x)
    mean_D = c.b1 * t * phi1(x)
    cov_DN = ex * (-c.b2 * t + c.b1 * c.zeta * t * t * phi2(x))
    var_D = c.b2 * t * phi1(x) + 2 * c.b1 * (-c.b2 * t * t * h(x) + c.b1 * c.zeta * t**3 * k(x))
    var_N = c.zeta * t * ex * phi1(x)
    return MomentReport(
        t,
        {"mean_D": mean_D, "var_D": var_D, "cov_DN": cov_DN, "corr_DN": _corr(cov_DN, var_D, var_N)},
        _branch(c.eta),
    )


def cov_births_deaths(spec: ModelSpec, t: float, route: str = "formula") -> MomentReport:
    """``Cov(D(t), B(t))``.

    ``route="formula"`` evaluates

        zeta a1 b1 (e^{eta t} - 1)^2 / eta^3
          - xi beta (eta t e^{eta t} - e^{eta t} + 1) / eta^3

    (with ``a1 = sum i lam_i``, ``b1 = sum j mu_j``, ``beta = a1 + b1``) in
    the series-stable form ``(a2 b1 - a1 b2) t^2 h + 2 a1 b1 zeta t^3 k``,
    which also covers ``eta = 0``.  ``route="identity"`` uses
    ``(Var B + Var D - Var N) / 2``.
    """
    c = _linear(spec, "cov_births_deaths")
    t = _check_t(t)
    x = _x(c, t)
    if route == "identity":
        vb = birth_moments(spec, t)["var_B"]
        vd = death_moments(spec, t)["var_D"]
        vn = glbdp_moments(spec, t)["var_N"]
        value = 0.5 * (vb + vd - vn)
    elif route == "formula":
        value = (c.a2 * c.b1 - c.a1 * c.b2) * t * t * h(x) + 2 * c.a1 * c.b1 * c.zeta * t**3 * k(x)
    else:
        raise DomainError("route must be 'formula' or 'identity'")
    vb = birth_moments(spec, t)["var_B"]
    vd = death_moments(spec, t)["var_D"]
    return MomentReport(t, {"cov_DB": value, "corr_DB": _corr(value, vb, vd)}, _branch(c.eta))


def cov_births_deaths_raw(spec: ModelSpec, t: float) -> float:
    """The ``eta != 0`` expression evaluated literally (no series)."""
    c = _linear(spec, "cov_births_deaths_raw")
    if abs(c.eta) <= ETA_TOL:
        raise DomainError("the literal expression divides by eta")
    e = c.eta
    E = math.exp(e * t)
    return (c.zeta * c.a1 * c.b1 / e**3) * (E - 1) ** 2 - (c.xi / e**3) * c.beta * (e * t * E - E + 1)


def linear_report(spec: ModelSpec, t: float) -> MomentReport:
    """Population, birth, death and path-integral blocks in one report."""
    r = glbdp_moments(spec, t)
    r.update(birth_moments(spec, t)).update(death_moments(spec, t))
    r.update(cov_births_deaths(spec, t)).update(path_integral_moments(spec, t))
    return r


def path_integral_moments(spec: ModelSpec, t: float) -> MomentReport:
    """Moments of ``X(t) = int_0^t N(s) ds`` from one progenitor."""
    c = _linear(spec, "path_integral_moments")
    t = _check_t(t)
    x = _x(c, t)
    ex = math.exp(x)
    mean_X = t * phi1(x)
    cov_NX = c.zeta * t * t * ex * phi2(x)
    var_X = 2 * c.zeta * t**3 * k(x)
    var_N = c.zeta * t * ex * phi1(x)
    return MomentReport(
        t,
        {"mean_X": mean_X, "var_X": var_X, "cov_NX": cov_NX, "corr_NX": _corr(cov_NX, var_N, var_X)},
        _branch(c.eta),
    )


def _constant(spec, what):
    if spec.variant is not Variant.CONSTANT:
        raise UnsupportedVariantError(f"{what} needs the constant-rate model")
    return derived_constants(spec)


def constant_moments(spec: ModelSpec, t: float):
    """First and second moments of ``(D*, B*, N*)`` and the covariance matrix.

    Returns ``(report, sigma)`` with ``sigma`` ordered as ``(D, B, N)``.
    """
    c = _constant(spec, "constant_moments")
    t = _check_t(t)
    v = {
        "mean_N": 1 + c.eta * t,
        "var_N": c.zeta * t,
        "mean_B": 1 + c.a1 * t,
        "var_B": c.a2 * t,
        "mean_D": c.b1 * t,
        "var_D": c.b2 * t,
        "cov_DB": 0.0,
        "cov_DN": -c.b2 * t,
        "cov_BN": c.a2 * t,
    }
    v["corr_DB"] = 0.0 if t > 0 else math.nan
    v["corr_DN"] = _corr(v["cov_DN"], v["var_D"], v["var_N"])
    v["corr_BN"] = _corr(v["cov_BN"], v["var_B"], v["var_N"])
    sigma = np.array(
        [
            [v["var_D"], v["cov_DB"], v["cov_DN"]],
            [v["cov_DB"], v["var_B"], v["cov_BN"]],
            [v["cov_DN"], v["cov_BN"], v["var_N"]],
        ]
    )
    return MomentReport(t, v, "closed"), sigma


def path_integral_moments_constant(spec: ModelSpec, t: float) -> MomentReport:
    """``E X* = t + eta t^2 / 2``, ``Cov(N*, X*) = zeta t^2 / 2``, ``Var X* = zeta t^3 / 3``."""
    c = _constant(spec, "path_integral_moments_constant")
    t = _check_t(t)
    mean_X = t + c.eta * t * t / 2
    cov_NX = c.zeta * t * t / 2
    var_X = c.zeta * t**3 / 3
    return MomentReport(
        t,
        {"mean_X": mean_X, "cov_NX": cov_NX, "var_X": var_X,
         "corr_NX": _corr(cov_NX, c.zeta * t, var_X)},
        "closed",
    )


def immigration_mean(
    spec: ModelSpec, t: float, p0_curve: Callable[[float], float] | None = None
) -> float:
    """Mean population with immigration.

    At state 0 only: ``e^{eta t} (1 + nu k1 (k1+1)/2 int_0^t e^{-eta s} p(0,s) ds)``,
    where ``p0_curve`` gives ``p(0, s)`` for the immigration process itself
    (see :func:`gbdp.kolmogorov.p0_curve`).  Everywhere:
    ``e^{eta t} + k1 (k1+1) nu (e^{eta t} - 1) / (2 eta)``.
    """
    t = _check_t(t)
    c = derived_constants(spec)
    k1 = spec.k1
    s1 = k1 * (k1 + 1) / 2
    x = _x(c, t)
    eta = 0.0 if abs(c.eta) <= ETA_TOL else c.eta
    if spec.variant is Variant.IMMIGRATION_ALL:
        return math.exp(x) + s1 * spec.nu * t * phi1(x)
    if spec.variant is not Variant.IMMIGRATION_ZERO:
        raise UnsupportedVariantError("immigration_mean needs an immigration variant")
    if p0_curve is None:
        raise DependencyError("immigration at 0 needs the p(0, s) curve from the forward solver")
    if t == 0:
        return 1.0
    val, _ = quad(lambda s: math.exp(-eta * s) * float(p0_curve(s)), 0.0, t,
                  epsabs=1e-11, epsrel=1e-10, limit=200)
    return math.exp(x) * (1.0 + spec.nu * s1 * val)


def immigration_mean_limit(spec: ModelSpec) -> float:
    """``t -> inf`` limit of the immigration-everywhere mean (finite only for eta < 0)."""
    c = derived_constants(spec)
    if spec.variant is not Variant.IMMIGRATION_ALL:
        raise UnsupportedVariantError("limit is given for immigration everywhere")
    if c.eta >= 0:
        return math.inf
    return -spec.k1 * (spec.k1 + 1) * spec.nu / (2 * c.eta)


@dataclass(frozen=True)
class ParkingMeans:
    E_N: float
    E_A: float
    E_D: float
    O: float


def parking_means(spec: ModelSpec, t: float) -> ParkingMeans:
    """Mean occupancy, arrivals, departures and average occupancy from an empty lot."""
    if spec.variant is not Variant.PARKING:
        raise UnsupportedVariantError("parking_means needs the parking model")
    t = _check_t(t)
    c = derived_constants(spec)
    K, a1, b1, beta = spec.capacity, c.a1, c.b1, c.beta
    y = -beta * t
    one_minus = -math.expm1(y)  # 1 - e^{-beta t}
    # t + (e^{-beta t} - 1)/beta = t (1 - phi1(-beta t))
    g = t * (1.0 - phi1(y))
    E_N = K * a1 * one_minus / beta
    E_A = a1 * (K * t - K * a1 / beta * g)
    E_D = K * a1 * b1 * g / beta
    O = K * a1 / beta * (1.0 - phi1(y))
    return ParkingMeans(E_N, E_A, E_D, O)


def parking_long_run(spec: ModelSpec) -> float:
    c = derived_constants(spec)
    return spec.capacity * c.a1 / c.beta


def limit_report(spec: ModelSpec) -> dict:
    """``t -> inf`` limits of ``E N`` and ``E B`` by the sign of ``eta``."""
    c = _linear(spec, "limit_report")
    if abs(c.eta) <= ETA_TOL:
        return {"mean_N": 1.0, "mean_B": math.inf}
    if c.eta > 0:
        return {"mean_N": math.inf, "mean_B": math.inf}
    return {"mean_N": 0.0, "mean_B": -c.b1 / c.eta}
