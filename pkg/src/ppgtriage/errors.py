"""Exception types shared across the package.

The CLI maps these onto exit codes (config 2, data 3, evaluation 4), so
library code should raise the most specific one that applies.
"""


class PpgTriageError(Exception):
    """Base class for all package errors."""


class ConfigError(PpgTriageError):
    """Invalid configuration: bad key, out-of-range value, unusable filter band."""


class DataError(PpgTriageError):
    """Unreadable or malformed input data (manifests, sample files, matrices)."""


class SignalTooShortError(DataError):
    """Signal shorter than the minimum an operation needs (e.g. filter padding)."""


class EvaluationError(PpgTriageError):
    """Evaluation cannot proceed: single-class data, too few patients per class."""
