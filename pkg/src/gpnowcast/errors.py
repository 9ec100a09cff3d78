"""Exception types shared across the package.

Plain shape and range problems raise the builtin ValueError / IndexError;
the classes here cover failure modes a caller might want to catch
separately, such as a factorization that cannot be rescued by jitter or a
training window that touches unobserved targets.
"""


class NowcastError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(NowcastError):
    """Invalid configuration, or a configuration the given data cannot support."""


class SchemaError(NowcastError):
    """Malformed input file: bad header, unparsable cell, wrong column count."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class SingularMatrixError(NowcastError):
    """Cholesky factorization failed at every rung of the jitter ladder."""


class TrainingError(NowcastError):
    """No optimizer start produced a finite marginal likelihood."""


class MissingDataError(NowcastError):
    """A training window contains unobserved targets."""


class InsufficientHistoryError(NowcastError):
    """The initial span that bootstraps imputation is not fully observed."""


class DegenerateLabelsError(NowcastError):
    """Classifier training needs both classes present."""


class DegenerateDataError(NowcastError):
    """Input carries no variance to decompose."""


class InsufficientDataError(NowcastError):
    """Fewer data points than the requested structure needs."""


class UndefinedCorrelationError(NowcastError):
    """Correlation is undefined for the given inputs (zero variance)."""


class EmptyEvaluationError(NowcastError):
    """Metric evaluation was asked for an empty subset of points."""
