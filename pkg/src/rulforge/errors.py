"""Exception taxonomy for the toolkit.

Three branches hang off :class:`RulforgeError`, and the CLI maps them to
exit codes: configuration problems exit 2, malformed or inconsistent data
exits 3, numerical failures exit 4.
"""


class RulforgeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(RulforgeError):
    """Invalid configuration, parameters, or command usage (exit code 2)."""


class DataError(RulforgeError):
    """Malformed, inconsistent, or missing input data (exit code 3)."""


class NumericError(RulforgeError):
    """Numerical failure while computing (exit code 4)."""


# --- dataset ingestion ---------------------------------------------------

class RowArityError(DataError):
    """A data row does not have the expected number of fields."""


class NonNumericError(DataError):
    """A token that must be numeric (or a positive integer) is not."""


class DuplicateCycleError(DataError):
    """An engine reports the same cycle index twice."""


class GapInCyclesError(DataError):
    """An engine's cycle indices are not dense starting at 1."""


class CountMismatchError(DataError):
    """The RUL file length does not match the number of test engines."""


# --- preprocessing -------------------------------------------------------

class EmptySeriesError(DataError):
    """A smoothing input has no samples."""


class AlphaOutOfRangeError(ConfigError):
    """EMA alpha outside (0, 1]."""


class WindowOutOfRangeError(ConfigError):
    """A window or moving-average length below 1."""


class TooFewRowsError(DataError):
    """An operation needs more rows than were supplied."""


class ColumnMismatchError(DataError):
    """Column names of a frame do not match a fitted artifact."""


class AllColumnsDroppedError(DataError):
    """Constant-feature screening removed every column."""


# --- feature analysis ----------------------------------------------------

class NComponentsTooLargeError(ConfigError):
    """More principal components requested than features available."""


class KOutOfRangeError(ConfigError):
    """Feature-selection k outside [1, n_features]."""


# --- autodiff ------------------------------------------------------------

class ShapeMismatchError(NumericError):
    """Operand shapes incompatible for the requested operation."""


class KernelTooLargeError(ConfigError):
    """Convolution kernel longer than the input sequence."""


class PoolOutOfRangeError(ConfigError):
    """Pooling width below 1."""


class NonScalarLossError(NumericError):
    """backward() was handed a non-scalar tensor."""


class NonFiniteLossError(NumericError):
    """Training loss became NaN or infinite. Carries the epoch index."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


# --- model fitting -------------------------------------------------------

class TooFewEnginesError(DataError):
    """Fewer distinct engines than cross-validation folds."""


class DegenerateDesignError(DataError):
    """Regression design matrix is identically zero."""


# --- evaluation ----------------------------------------------------------

class EmptyInputError(DataError):
    """A metric received empty prediction/actual arrays."""


class ZeroVarianceTargetError(DataError):
    """R^2 is undefined because the actuals are constant."""


# --- artifacts -----------------------------------------------------------

class FingerprintMismatchError(DataError):
    """A model and the artifacts it is applied to come from different configs."""
