"""Exception and warning types shared across the package."""


class DegenerateInput(ValueError):
    """Input is rank-deficient or too close to a singular configuration."""


class ShapeMismatch(ValueError):
    """Tensor shapes are inconsistent with the operation's contract."""


class InvalidHeads(ValueError):
    """Channel count is not divisible by the requested head count."""


class NonFiniteGradient(ArithmeticError):
    """A gradient contained NaN or Inf during a gradient check."""


class NonFiniteLoss(ArithmeticError):
    """The training loss became NaN or Inf; the run must abort."""


class InsufficientFeatures(ValueError):
    """Queue initialization received fewer features than the queue length."""


class QueueNotReady(RuntimeError):
    """Sampling was attempted before every category slot was filled."""


class UnknownCategory(KeyError):
    """A category id has no registered generator or queue row."""


class TooFewPoints(ValueError):
    """Point cloud is too small for the requested descriptor."""


class WrongPointCount(ValueError):
    """Point cloud size differs from the configured model input size."""


class CorruptManifest(IOError):
    """Dataset manifest is missing fields or fails to parse."""


class VersionMismatch(IOError):
    """On-disk format version differs from the supported version."""


class TruncatedArray(IOError):
    """A binary array file ends before its declared payload."""


class CorruptCheckpoint(IOError):
    """Checkpoint file is truncated or fails its header check."""


class EmptyCategoryWarning(UserWarning):
    """A registered category had no samples and was excluded from the mean."""
