"""
Exception hierarchy shared by all gmac modules.
"""


class GmacError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(GmacError, ValueError):
    """An argument lies outside the domain of the called function."""


class NumericalError(GmacError):
    """Quadrature or iterative solver failed to reach its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConstellationError(GmacError):
    """Invalid, unknown or non-decomposable constellation."""


class OptimizationError(NumericalError):
    """Constellation optimizer did not converge; carries the best pair found."""

    def __init__(self, message, best=None, capacity=None, diagnostics=None):
        super().__init__(message, diagnostics)
        self.best = best
        self.capacity = capacity


class LpInfeasibleError(GmacError):
    """The linear program has no feasible point."""

    def __init__(self, message, binding=None):
        super().__init__(message)
        self.binding = binding or []


class LpUnboundedError(GmacError):
    """The linear program objective is unbounded."""


class DesignError(GmacError):
    """Degree-distribution design could not produce a valid code."""


class GraphError(GmacError):
    """Tanner graph construction or parsing failed."""


class ConfigError(GmacError):
    """Run configuration is invalid."""
