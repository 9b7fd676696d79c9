"""Exception types raised by the sampler engine."""


class GlmmError(Exception):
    """Base class for errors raised by glmmcmc."""


class ModelError(GlmmError, ValueError):
    """Inconsistent model data, priors or configuration."""


class UnsupportedModelError(ModelError):
    """The requested kernel does not apply to this model (e.g. probit DA with trials > 1)."""


class NumericalError(GlmmError, ArithmeticError):
    """A factorization failed or a gradient became non-finite."""

    def __init__(self, message, coordinate=None):
        super().__init__(message)
        self.coordinate = coordinate


class NotPositiveDefiniteError(NumericalError):
    """Cholesky factorization failed; no jitter is ever added."""


class EnvelopeViolation(GlmmError, ValueError):
    """The adaptive rejection envelope failed to bound the log density (density not log-concave)."""


class UndefinedStatisticError(GlmmError, ValueError):
    """A diagnostic is undefined for the supplied chain (zero variance, singular covariance)."""

    def __init__(self, message, coordinates=None):
        super().__init__(message)
        self.coordinates = coordinates


class FitError(GlmmError, RuntimeError):
    """The M-step or MCML maximization failed; ``last`` holds the last accepted iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last
