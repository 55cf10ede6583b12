"""Exception types shared across the pipeline."""


class EmgaitError(Exception):
    """Base class for every error raised by this package."""


# dataset I/O
class MalformedFile(EmgaitError):
    """A data file does not match the documented CSV/JSON schema."""


class NonMonotonicEvents(EmgaitError):
    """Heel-strike times are not strictly ascending or fall outside the recording."""


class EmptyChannel(EmgaitError):
    """A recording has fewer than two samples per channel."""


class InvalidConfig(EmgaitError):
    """A synthetic-data or model configuration violates its constraints."""


# gait labeling
class TooFewEvents(EmgaitError):
    """Not enough heel strikes (or cycles) to proceed."""


class OutOfCycle(EmgaitError):
    """A query time lies outside the given gait cycle."""


# dsp
class InvalidBand(EmgaitError):
    """Filter band edges are not 0 < low < high < Nyquist."""


class SignalTooShort(EmgaitError):
    """Signal shorter than the operation's minimum length."""


class InvalidFactor(EmgaitError):
    """Decimation factor is not a positive integer."""


# features / scaling / pca
class NotFitted(EmgaitError):
    """A scaler or model was used before fitting."""


class DegenerateInput(EmgaitError):
    """Too few rows to estimate the requested statistics."""


class BadK(EmgaitError):
    """Requested component count outside the fitted range."""


# classifiers
class MissingClass(EmgaitError):
    """Training data lacks the samples a classifier needs per class."""


class EmptyInput(EmgaitError):
    """Empty training matrix."""


class SingularCovariance(EmgaitError):
    """Pooled covariance not positive definite even after ridge regularization."""


# neural
class ShapeMismatch(EmgaitError):
    """Tensor shapes do not conform for the requested layer operation."""


class NonFiniteGradient(EmgaitError):
    """A gradient contained NaN or infinity."""


class EmptySplit(EmgaitError):
    """A train/val/test split has no samples."""


class CorruptBlob(EmgaitError):
    """A serialized weights blob or checkpoint failed to parse."""


# experiment
class TooFewSubjects(EmgaitError):
    """Not enough subjects to form the requested split."""


class IoError(EmgaitError):
    """Report or artifact could not be written."""
