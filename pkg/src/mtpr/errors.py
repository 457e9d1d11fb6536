"""Exception hierarchy shared across the package."""


class MTPRError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(MTPRError, ValueError):
    """Invalid model or algorithm parameters."""


class SizingError(ParameterError):
    """Dimensions that are empty, too small, or beyond the memory budget."""


class DimensionError(MTPRError, ValueError):
    """Arrays whose shapes do not agree."""


class MatrixError(MTPRError, ValueError):
    """A matrix that violates a structural requirement (e.g. PSD)."""


class OptimizationError(MTPRError, RuntimeError):
    """The SDP solver ran out of iterations.

    ``best`` holds the best feasible iterate found so far.
    """

    def __init__(self, message, best=None, gap=None):
        super().__init__(message)
        self.best = best
        self.gap = gap


class ConsistencyError(MTPRError, RuntimeError):
    """An estimated overlap matrix that cannot be exact (usually d too small)."""


class SupportConsistencyError(ConsistencyError):
    """Public-overlap subtraction left a non-integer or out-of-range entry.

    ``pairs`` lists the offending (i, j) index pairs.
    """

    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = list(pairs)


class StructureError(MTPRError, ValueError):
    """An intersection matrix that is not the full k-subset family of a (k+2)-set."""


class InconsistentSystemError(MTPRError, ValueError):
    """No assignment satisfies the signed subset-sum system within tolerance."""


class RecoveryError(MTPRError, RuntimeError):
    """The attack could not produce trustworthy private images."""


class InsufficientSamplesError(RecoveryError):
    """No floral submatrix was found; more synthetic images are needed."""


class RecoveryQualityError(RecoveryError):
    """Too many pixels had ambiguous or inconsistent sign systems."""


class StageError(RecoveryError):
    """Wraps an error raised inside a pipeline stage, tagging the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class FormatError(MTPRError, IOError):
    """Base class for dataset/truth file problems. ``code`` is stable."""

    code = "format"


class BadMagicError(FormatError):
    code = "bad-magic"


class UnsupportedVersionError(FormatError):
    code = "unsupported-version"


class TruncatedFileError(FormatError):
    code = "truncated"


class ChecksumError(FormatError):
    code = "checksum"
