"""Exception types shared across the package.

File-level problems reuse the builtin ``OSError`` / ``OverflowError``;
everything contract-specific gets its own class so callers can distinguish
bad data from bad usage.
"""


class FormatError(ValueError):
    """Input file is readable but not in a supported encoding."""


class InvalidParamsError(ValueError):
    """Algorithm parameters violate their documented constraints."""


class EmptyRegionError(ValueError):
    """A descriptor was requested for a region with no pixels."""


class DegenerateLabelsError(ValueError):
    """A binary training problem contains only one class."""


class SingleClassError(Exception):
    """The label pool collapsed to a single class.

    Raised by bank training; the segmentation loop treats it as
    convergence, not as a failure.
    """


class LengthMismatchError(ValueError):
    """Two distributions of different lengths were compared."""


class EmptyMaskError(ValueError):
    """A ground-truth mask has no foreground pixels."""


class EmptySegmentError(ValueError):
    """A segment with no pixels was scored."""


class DimensionMismatchError(ValueError):
    """Label map and mask dimensions disagree."""
