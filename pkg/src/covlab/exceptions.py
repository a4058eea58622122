"""Error types shared across the lab."""


class CovlabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDimension(CovlabError, ValueError):
    pass


class ConvexityError(CovlabError, ValueError):
    """Potential is not strictly convex where it must be."""


class TruncationError(CovlabError, RuntimeError):
    """Tail bound could not be pushed below the requested tolerance."""


class BudgetError(CovlabError, RuntimeError):
    """A node or pair budget would be exceeded."""


class QuadratureError(CovlabError, RuntimeError):
    """Non-finite values or failed integration."""


class UnsupportedForm(CovlabError, TypeError):
    """Operation not defined for this measure representation."""


class ModeError(CovlabError, ValueError):
    """Wrong integrand mode (e.g. a step field passed to the Lipschitz path)."""


class DomainError(CovlabError, ValueError):
    """Parameter outside the admissible range (e.g. exponent p < 2)."""


class DegenerateSliceError(CovlabError, RuntimeError):
    """A conditional slice carries no mass on the grid."""


class SolverError(CovlabError, RuntimeError):
    """Linear solve failed or did not reach the requested residual."""


class ConfigError(CovlabError, ValueError):
    """Malformed or incomplete run configuration."""
