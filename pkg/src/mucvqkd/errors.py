"""Exception and warning types shared across the package."""


class QKDError(Exception):
    """Base class for all errors raised by this package."""


class NonPhysicalState(QKDError):
    """An operator that should be a density operator has a negative eigenvalue."""


class SupportViolation(QKDError):
    """Relative entropy is infinite: rho has weight on the kernel of sigma."""


class DimensionMismatch(QKDError, ValueError):
    pass


class QuadratureFailure(QKDError):
    pass


class NonPSKConstellation(QKDError, ValueError):
    pass


class DegenerateConditioning(QKDError):
    """A key symbol has (numerically) zero probability, so conditioning on it is undefined."""


class WeightOutOfRange(QKDError):
    """The weight outside the cutoff space is >= 1; the cutoff is too small for the channel."""


class Infeasible(QKDError):
    pass


class Stalled(QKDError):
    pass


class CertificateFailure(QKDError):
    """The dual problem could not be solved, so no lower bound can be certified."""


class ConfigError(QKDError, ValueError):
    pass


class TruncationWarning(UserWarning):
    """A Fock cutoff is too small to represent a displaced state to working precision."""
