"""Generalized birth-death processes.

Simulation, truncated forward equations, constant-rate closed forms,
moments, extinction analysis and rate estimation for processes that jump
up by ``1..k1`` and down by ``1..k2``.
"""

from ._backend import BACKEND
from .errors import (
    DependencyError,
    DomainError,
    GBDPError,
    NumericalToleranceError,
    SingularInputError,
    TruncationError,
    UnsupportedVariantError,
)
from .model import (
    DerivedConstants,
    EventDescriptor,
    EventKind,
    ModelSpec,
    Variant,
    birth_rate,
    death_rate,
    derived_constants,
    total_exit_rate,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DependencyError",
    "DerivedConstants",
    "DomainError",
    "EventDescriptor",
    "EventKind",
    "GBDPError",
    "ModelSpec",
    "NumericalToleranceError",
    "SingularInputError",
    "TruncationError",
    "UnsupportedVariantError",
    "Variant",
    "birth_rate",
    "death_rate",
    "derived_constants",
    "total_exit_rate",
]
