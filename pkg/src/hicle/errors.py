"""Exception types shared across the package."""


class HicleError(Exception):
    """Base class for all package errors."""


class StructuralError(HicleError):
    """Shape, length, or tree-structure inconsistency in the inputs."""


class ConfigError(HicleError):
    """Invalid or out-of-range configuration value."""


class DegenerateBatchError(HicleError):
    """A batch without the positive pairs a loss requires."""


class NormalizationError(HicleError):
    """Feature rows that are not unit L2-norm where required."""


class NumericError(HicleError):
    """Non-finite values or numerically degenerate states."""


class FormatError(HicleError):
    """Malformed binary or CSV container.

    ``offset`` is the byte offset at which the problem was detected,
    when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
