"""Exception types raised across the package."""


class RIFError(Exception):
    """Base class for all package errors."""


class InvalidSpec(RIFError, ValueError):
    """A distribution, fitness or config spec failed validation."""


class NonConvergentQuadrature(RIFError):
    """Two quadrature refinement levels disagree and no divergence was detected."""


class SeriesInconclusive(RIFError):
    """The Malthusian series hit its term cap without converging or diverging."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class Inconclusive(RIFError):
    """Regime classification could not be decided; carries the probe trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class UnsupportedRegime(RIFError):
    pass


class NotGPAF(RIFError):
    pass


class RequiresCayley(RIFError):
    pass


class AllZero(RIFError):
    """Every weight in a sampling index is zero."""


class OutOfRange(RIFError, IndexError):
    pass


class BinGap(RIFError):
    """A vertex weight falls in none of the configured bins."""


class ShapeMismatch(RIFError):
    pass


class InsufficientData(RIFError):
    pass


class CapacityExceeded(RIFError):
    """Requested tree would exceed the configured vertex cap."""
