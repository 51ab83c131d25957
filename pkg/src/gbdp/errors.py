"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class GBDPError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(GBDPError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedVariantError(DomainError):
    """The operation is undefined for the given model variant."""


class SingularInputError(DomainError):
    """The input sits on a singularity (a pole, a root, ``v == 1``, ...)."""


class DependencyError(GBDPError):
    """A required upstream quantity was not supplied."""


class NumericalToleranceError(GBDPError, ArithmeticError):
    """A numerical result could not be certified at the requested tolerance."""


class TruncationError(NumericalToleranceError):
    """A truncated solve failed to reach tolerance at the maximum window.

    ``diagnostics`` carries whatever the solver knew when it gave up.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
