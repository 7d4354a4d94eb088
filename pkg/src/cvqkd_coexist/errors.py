"""Exception hierarchy.

Everything raised on purpose by the package derives from :class:`CvqkdError`.
Configuration problems derive from :class:`ConfigError`; everything else is
treated by the CLI as a numerical failure.
"""


class CvqkdError(Exception):
    """Base class for all package errors."""


class ConfigError(CvqkdError, ValueError):
    """Invalid or unknown configuration entry."""


class NumericalError(CvqkdError, ArithmeticError):
    """A numerical stage failed or produced an implausible result."""


class InsufficientSamples(CvqkdError, ValueError):
    pass


class NonPositiveShotNoise(NumericalError):
    pass


class InvalidOrder(CvqkdError, ValueError):
    pass


class MissingCoefficient(CvqkdError, KeyError):
    pass


class AmbiguousPeak(NumericalError):
    pass


class TimingNotFound(NumericalError):
    pass


class Diverged(NumericalError):
    pass


class NegativeTransmittance(NumericalError):
    pass


class DomainError(CvqkdError, ValueError):
    pass


class NumericalInstability(NumericalError):
    pass


class FitDiverged(NumericalError):
    pass


class Underdetermined(ConfigError):
    pass
