"""Exceptions defined by timbre itself."""

from typing import (
    Optional,
    Tuple,
    Union,
)


class TimbreError(Exception):
    """Superclass for every exception raised by this package."""


class ConfigError(TimbreError, ValueError):
    """Exception raised when a configuration file or a command-line
    option cannot be turned into a valid run configuration.
    """


class CorruptFile(TimbreError):
    """Exception raised when a frame store or a checkpoint has the
    wrong magic number or is truncated.
    """


# Signal processing.


class InputTooShort(TimbreError, ValueError):
    """Exception raised when a signal is shorter than one analysis window."""

    def __init__(self, n_samples: int, needed: int):
        self.n_samples = n_samples
        self.needed = needed
        super(InputTooShort, self).__init__(
            "Signal has %d samples but one analysis window needs %d."
            % (n_samples, needed)
        )


class MissingPhase(TimbreError, ValueError):
    """Exception raised when an inverse transform is asked to
    synthesize a magnitude-only spectrogram. Use `griffin_lim` for that.
    """


class NotPainless(TimbreError):
    """Exception raised when an NSGT window bank does not cover every
    frequency, so the frame operator cannot be inverted.
    """


class PlanMismatch(TimbreError, ValueError):
    """Exception raised when a transform plan (or a model) is used
    with data produced for another transform or signal length.
    """


class OutOfRange(TimbreError, ValueError):
    """Exception raised when a time position lies outside a signal."""


class DegenerateCorpus(TimbreError, ValueError):
    """Exception raised when a corpus has no energy at all, so it
    cannot be normalized.
    """


class Unsupported(TimbreError, ValueError):
    """Exception raised when an operation is asked for a transform
    kind that does not support it.
    """


# Ratings.


class DegenerateScale(TimbreError, ValueError):
    """Exception raised when a rating scale has equal bounds."""


class NoCommonPairs(TimbreError, ValueError):
    """Exception raised when no set of two or more instruments has
    ratings for every pair.
    """


class MissingPair(TimbreError, ValueError):
    """Exception raised when a pair of selected instruments has no rating."""

    def __init__(self, pair: Tuple[str, str]):
        self.pair = pair
        super(MissingPair, self).__init__(
            "No rating for the pair %r / %r." % pair
        )


# Differentiation and training.


class ShapeError(TimbreError, ValueError):
    """Exception raised when tensors of incompatible shapes are combined."""


class NotScalar(TimbreError, ValueError):
    """Exception raised when backpropagation starts from a non-scalar."""


class NonFiniteGradient(TimbreError, ArithmeticError):
    """Exception raised when a gradient contains NaN or infinity."""


class NonFiniteInput(TimbreError, ValueError):
    """Exception raised when a model is fed NaN or infinity."""


class UnknownClass(TimbreError, KeyError):
    """Exception raised when a class label has no counterpart in the
    timbre target.
    """

    def __init__(self, label: str):
        self.label = label
        super(UnknownClass, self).__init__(
            "Class %r is not part of the timbre target." % label
        )


class TrainingDiverged(TimbreError, ArithmeticError):
    """Exception raised when the training loss stops being finite.

    :param epoch: The epoch during which the loss diverged.
    :param checkpoint: The last checkpoint written before the
        divergence, if there is one.
    """

    def __init__(self, epoch: int, checkpoint: Optional[str] = None):
        self.epoch = epoch
        self.checkpoint = checkpoint
        message = "Loss became non-finite during epoch %d." % epoch
        if checkpoint is not None:
            message += " Last good checkpoint: %s" % checkpoint
        super(TrainingDiverged, self).__init__(message)


class EmptySplit(TimbreError, ValueError):
    """Exception raised when an evaluation is asked for zero frames."""


# Descriptors and synthesis.


class UndefinedDescriptor(TimbreError, ValueError):
    """Exception raised when a descriptor is asked of a silent frame."""


class StuckAtStep(TimbreError):
    """Exception raised by path synthesis when every candidate of a
    step had to be discarded.
    """

    def __init__(self, step: int):
        self.step = step
        super(StuckAtStep, self).__init__(
            "Every candidate was discarded at step %d." % step
        )


class EmptyTarget(TimbreError, ValueError):
    """Exception raised when a descriptor target series has no values."""


def describe(error: Union[str, Exception]) -> str:
    """Turn an exception into a one-line explanation for the command line."""
    if isinstance(error, Exception):
        return "%s: %s" % (error.__class__.__name__, str(error))
    return error
