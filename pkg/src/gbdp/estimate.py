"""Estimation of the aggregate rate ``Lambda = sum lam_i + sum mu_j`` of the linear model.

In state ``n`` the sojourn is exponential with parameter ``Lambda * n``, so
``2 Lambda sum(n_k tau_k)`` is exactly chi-square with ``2E`` degrees of
freedom for ``E`` observed transitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammainc, gammaincinv

from .errors import DomainError
from .simulate import Trajectory


@dataclass(frozen=True)
class TransitionRecord:
    state_before: int
    sojourn: float

    def __post_init__(self):
        if int(self.state_before) < 1:
            raise DomainError("state_before must be >= 1 (state 0 has no clock)")
        if not (self.sojourn > 0) or not math.isfinite(self.sojourn):
            raise DomainError("sojourn must be positive and finite")


def extract_records(traj: Trajectory) -> list[TransitionRecord]:
    """One record per observed jump; the censored interval after the last jump is dropped."""
    states, durations = traj.completed_sojourns()
    return [TransitionRecord(int(s), float(d)) for s, d in zip(states, durations)]


def _arrays(records: Iterable[TransitionRecord] | np.ndarray):
    if isinstance(records, np.ndarray):
        arr = np.atleast_2d(records)
        n, tau = arr[:, 0], arr[:, 1]
        if np.any(n < 1) or np.any(tau <= 0):
            raise DomainError("records need state_before >= 1 and positive sojourns")
    else:
        records = list(records)
        n = np.array([r.state_before for r in records], dtype=np.float64)
        tau = np.array([r.sojourn for r in records], dtype=np.float64)
    if n.size == 0:
        raise DomainError("at least one transition record is required")
    return n, tau


def exposure(records) -> tuple[int, float]:
    """``(E, sum n_k tau_k)``."""
    n, tau = _arrays(records)
    return int(n.size), math.fsum(n * tau)


def mle_lambda(records) -> float:
    """``E / sum n_k tau_k``."""
    E, S = exposure(records)
    return E / S


def sufficient_statistic(records) -> float:
    """``sum n_k tau_k / E``, unbiased for ``1 / Lambda``."""
    E, S = exposure(records)
    return S / E


def chi2_quantile(p: float, dof: float) -> float:
    """Chi-square quantile via the inverse regularized incomplete gamma function."""
    return 2.0 * float(gammaincinv(dof / 2.0, p))


def confidence_interval(records, alpha: float = 0.05) -> tuple[float, float]:
    """Exact ``1 - alpha`` interval from the chi-square pivot."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    E, S = exposure(records)
    lo = chi2_quantile(alpha / 2, 2 * E) / (2 * S)
    hi = chi2_quantile(1 - alpha / 2, 2 * E) / (2 * S)
    return lo, hi


def chisq_gof(records, Lambda0: float) -> float:
    """Two-sided p-value of ``2 Lambda0 sum n tau`` against chi-square with ``2E`` dof."""
    if not Lambda0 > 0:
        raise DomainError("Lambda0 must be positive")
    E, S = exposure(records)
    F = float(gammainc(E, Lambda0 * S))  # chi2_{2E} cdf at 2 Lambda0 S
    return min(1.0, 2.0 * min(F, 1.0 - F))


def estimate_report(records, alpha: float = 0.05) -> dict:
    E, S = exposure(records)
    lo, hi = confidence_interval(records, alpha)
    return {
        "lambda_hat": E / S,
        "lambda_tilde": S / E,
        "ci_low": lo,
        "ci_high": hi,
        "n_events": E,
    }


def records_from_trajectories(trajs: Sequence[Trajectory]) -> list[TransitionRecord]:
    out = []
    for tr in trajs:
        out.extend(extract_records(tr))
    return out

