"""Extinction analysis through the characteristic polynomial, plus hitting-time transforms.

For the linear model

    psi(u) = sum_i lam_i u^{i+k2} - Lambda u^{k2} + sum_j mu_j u^{k2-j},

a polynomial of degree ``k1 + k2`` with leading coefficient ``lam_{k1}``.
``u = 1`` is always a root.  The extinction probability is the least
positive root; with distinct roots ``r_i`` the partial-fraction residues
``c_i = r_i^{k2-1} / (lam_{k1} prod_{j != i} (r_i - r_j))`` define
``g(u) = prod (u - r_i)^{-c_i}``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .errors import DomainError, NumericalToleranceError, SingularInputError, TruncationError, UnsupportedVariantError
from .model import ModelSpec, Variant, derived_constants, rate_arrays

IMAG_TOL = 1e-8
DISTINCT_GAP = 1e-7


@dataclass(frozen=True)
class ExtinctionAnalysis:
    psi_coeffs: np.ndarray  # highest power first, as numpy.polyval expects
    roots: np.ndarray
    residues: np.ndarray | None
    epsilon: float
    distinct: bool
    k2: int = 1

    def psi(self, u):
        return np.polyval(self.psi_coeffs, u)

    def to_dict(self) -> dict:
        def cplx(z):
            return [float(np.real(z)), float(np.imag(z))]

        return {
            "epsilon": self.epsilon,
            "distinct": self.distinct,
            "psi_coeffs": [float(c) for c in self.psi_coeffs],
            "roots": [cplx(r) for r in self.roots],
            "residues": None if self.residues is None else [cplx(c) for c in self.residues],
        }


def psi_coefficients(spec: ModelSpec) -> np.ndarray:
    k1, k2 = spec.k1, spec.k2
    c = derived_constants(spec)
    by_power = np.zeros(k1 + k2 + 1)
    for i, lam in enumerate(spec.lam, 1):
        by_power[i + k2] += lam
    by_power[k2] -= c.Lambda
    for j, mu in enumerate(spec.mu, 1):
        by_power[k2 - j] += mu
    return by_power[::-1].copy()


def _polish(coeffs, roots, iters=8):
    d = np.polyder(coeffs)
    out = []
    for r in roots:
        z = complex(r)
        for _ in range(iters):
            f = np.polyval(coeffs, z)
            fp = np.polyval(d, z)
            if fp == 0:
                break
            step = f / fp
            z -= step
            if abs(step) <= 1e-16 * max(1.0, abs(z)):
                break
        out.append(z)
    return np.array(out)


def analyze(spec: ModelSpec) -> ExtinctionAnalysis:
    """Roots, residues and extinction probability of the linear model."""
    if spec.variant is not Variant.LINEAR:
        raise UnsupportedVariantError("extinction analysis is defined for the linear model")
    if spec.k1 < 1 or spec.k2 < 1:
        raise DomainError("extinction analysis needs at least one birth and one death size")
    if spec.lam[-1] <= 0:
        raise DomainError("the largest birth size has zero rate: degenerate leading coefficient")
    coeffs = psi_coefficients(spec)
    roots = _polish(coeffs, np.roots(coeffs))
    # u = 1 is exact; snap the polished copy onto it
    i1 = int(np.argmin(np.abs(roots - 1.0)))
    if abs(roots[i1] - 1.0) < 1e-6:
        roots[i1] = 1.0 + 0j
    order = np.lexsort((roots.imag, roots.real))
    roots = roots[order]
    gaps = [abs(a - b) for i, a in enumerate(roots) for b in roots[i + 1:]]
    distinct = bool(not gaps or min(gaps) > DISTINCT_GAP)
    residues = None
    if distinct:
        lead = spec.lam[-1]
        residues = np.array(
            [
                roots[i] ** (spec.k2 - 1) / (lead * np.prod(np.delete(roots[i] - roots, i)))
                for i in range(len(roots))
            ]
        )
    real_pos = [r.real for r in roots if abs(r.imag) <= IMAG_TOL and r.real > 0]
    if not real_pos:
        raise NumericalToleranceError("no positive real root found (u = 1 should always be one)")
    eps = min(min(real_pos), 1.0)
    return ExtinctionAnalysis(coeffs, roots, residues, float(eps), distinct, spec.k2)


def g_function(analysis: ExtinctionAnalysis, u):
    """Principal-branch ``prod (u - r_i)^{-c_i}``; real when the imaginary part cancels."""
    if analysis.residues is None:
        raise SingularInputError("g is only defined for distinct roots")
    z = complex(u)
    acc = 0j
    for r, c in zip(analysis.roots, analysis.residues):
        d = z - r
        if abs(d) < 1e-14:
            raise SingularInputError(f"u = {u} sits on a root of psi")
        acc -= c * cmath.log(d)
    val = cmath.exp(acc)
    if not isinstance(u, complex) and abs(val.imag) <= 1e-9 * max(1.0, abs(val)):
        return val.real
    return val


def hitting_time_laplace(
    spec: ModelSpec,
    k: int,
    theta: float,
    g_weight: Callable[[int], float] | None = None,
    K_max: int | None = None,
    tol: float = 1e-8,
    max_window: int = 2**22,
) -> float:
    """``E exp(-theta W_k)`` with ``W_k = int_0^{Z_k} g(N(t)) dt`` (``g = 1`` gives ``Z_k``).

    Solves the backward system with rates divided by ``g``:
    ``theta W_k = sum lam*_i (W_{k+i} - W_k) + sum mu*_j (W_{k-j} - W_k)``,
    ``W_0 = 1`` and ``W = 0`` above the window.  The window doubles until
    the answer moves by less than ``tol``.  Near criticality the truncation
    error decays only like ``1/K``; there the Aitken extrapolate of three
    successive windows is returned once two extrapolates agree to ``tol``.
    """
    theta = float(theta)
    if not theta >= 0 or not math.isfinite(theta):
        raise DomainError("theta must be finite and nonnegative")
    k = int(k)
    if k < 0:
        raise DomainError("k must be nonnegative")
    if spec.variant is Variant.PARKING or not spec.zero_is_absorbing:
        raise DomainError("state 0 must be absorbing (no immigration at 0)")
    if k == 0:
        return 1.0
    k1, k2 = spec.k1, spec.k2
    K = max(int(K_max) if K_max else 64, k + k1)
    vals = []
    accel = []
    while True:
        val = _laplace_window(spec, k, theta, g_weight, K)
        if vals and abs(val - vals[-1]) < tol:
            return float(val)
        if spec.variant is Variant.TABLE and K > max(n for (n, _, _) in spec.table) + k1:
            # every rate vanishes beyond the table, so this window is exact
            return float(val)
        vals.append(val)
        if len(vals) >= 3:
            x0, x1, x2 = vals[-3:]
            den = (x2 - x1) - (x1 - x0)
            if den != 0:
                accel.append(x2 - (x2 - x1) ** 2 / den)
                if len(accel) >= 2 and abs(accel[-1] - accel[-2]) < tol:
                    return float(min(max(accel[-1], 0.0), 1.0))
        prev = val
        K *= 2
        if K > max_window:
            raise TruncationError(
                "hitting-time transform did not converge",
                {"window": K // 2, "last": prev, "theta": theta},
            )


def _laplace_window(spec, k, theta, g_weight, K):
    k1, k2 = spec.k1, spec.k2
    states = np.arange(1, K + 1)
    b, d = rate_arrays(spec, states)
    if g_weight is not None:
        gw = np.array([float(g_weight(int(s))) for s in states])
        if np.any(gw <= 0):
            raise DomainError("g_weight must be positive on every state above 0")
        b = b / gw[:, None]
        d = d / gw[:, None]
    diag = theta + b.sum(axis=1) + d.sum(axis=1)
    # row s-1 is state s; column for state s+i is offset +i
    ab = np.zeros((k1 + k2 + 1, K))
    ab[k1, :] = diag
    for i in range(1, k1 + 1):
        # A[s, s+i] = -b[s, i]  -> ab[k1 - i, col s+i]
        ab[k1 - i, i:] = -b[: K - i, i - 1]
    rhs = np.zeros(K)
    for j in range(1, k2 + 1):
        # A[s, s-j] = -d[s, j]  -> ab[k1 + j, col s-j]
        ab[k1 + j, : K - j] = -d[j:, j - 1]
        if j <= K:
            rhs[j - 1] += d[j - 1, j - 1]  # state j jumping to 0
    # states with no exit at all keep W = 0 (never absorbed) when theta = 0
    dead = diag == 0
    if np.any(dead):
        ab[k1, dead] = 1.0
    W = solve_banded((k2, k1), ab, rhs)
    return float(W[k - 1])


def lbdp_p0(lam: float, mu: float, t: float) -> float:
    """Closed form of ``p(0, t)`` for single-size births and deaths."""
    if lam == mu:
        return lam * t / (1 + lam * t)
    e = math.exp(-t * (lam - mu))
    return (mu - mu * e) / (lam - mu * e)


def transient_extinction(spec: ModelSpec, t: float, opts=None) -> float:
    """``p(0, t)`` from the forward solver, cross-checked against the closed form when ``k1 = k2 = 1``."""
    from .kolmogorov import solve_state_probabilities

    if spec.variant is not Variant.LINEAR:
        raise UnsupportedVariantError("transient extinction is computed for the linear model")
    t = float(t)
    if not t >= 0:
        raise DomainError("t must be nonnegative")
    p0 = solve_state_probabilities(spec, 1, [t], opts)[0].prob(0)
    if spec.k1 == 1 and spec.k2 == 1:
        ref = lbdp_p0(spec.lam[0], spec.mu[0], t)
        if abs(ref - p0) > 1e-6:
            raise NumericalToleranceError(f"p(0,t) solver {p0} disagrees with closed form {ref}")
    return p0
