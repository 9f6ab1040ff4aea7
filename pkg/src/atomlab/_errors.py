"""Shared exception and warning types."""


class AtomLabError(Exception):
    """Base class for all atomlab errors."""


class BoundsError(AtomLabError, ValueError):
    """A parameter lies outside the supported range."""


class HypothesisError(AtomLabError, ValueError):
    """A hard admissibility gate was violated (operation refused)."""


class ValidationError(AtomLabError, ValueError):
    """An atom failed validation where a passing certificate is required."""


class NumericsError(AtomLabError, RuntimeError):
    """An iteration failed to converge or produced non-finite values."""


class ConfigError(AtomLabError, ValueError):
    """Malformed experiment configuration or file format."""


class SuiteError(NumericsError):
    """An experiment suite aborted; carries the failing sub-experiment id."""


class HypothesisWarning(UserWarning):
    """Soft admissibility flag: the result is reported but the sufficient
    condition backing it does not hold, so no bound is guaranteed."""


class AliasingWarning(UserWarning):
    """A resampled field carries noticeable top-band energy; interpolation
    error may not be negligible."""
