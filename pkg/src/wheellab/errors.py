"""Exception hierarchy shared across the package.

Every error carries a short machine-parsable class name (used by the CLI
for exit codes and one-line error reporting).
"""


class WheelLabError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class BehindCamera(WheelLabError):
    """A point projected behind the camera (depth <= 0)."""


class EmptyAxis(WheelLabError):
    """A weighted sampling axis (drivers, behaviors, ...) is empty."""


class JointLimit(WheelLabError):
    """A joint angle exceeds its configured range."""


class WrongKeypointCount(WheelLabError):
    """A hand does not carry exactly 21 keypoints."""


class EmptyManifest(WheelLabError):
    """An operation requires a nonempty manifest."""


class TooFewIdentities(WheelLabError):
    """Identity-based splitting needs at least 3 distinct drivers."""


class UnachievableTarget(WheelLabError):
    """A class fraction cannot be reached by deletions alone."""


class InsufficientData(WheelLabError):
    """Not enough drivers/sequences/frames for the requested subset."""


class ParseError(WheelLabError):
    """A manifest or config file failed to parse; names the line."""


class ShapeMismatch(WheelLabError):
    """Tensor shapes incompatible with the requested operation."""


class StaleCache(WheelLabError):
    """A backward pass received a cache from a different forward."""


class OneClassOnly(WheelLabError):
    """A metric is undefined because only one class is present."""


class RectOutOfBounds(WheelLabError):
    """A crop rectangle extends outside its source image."""


class NoCategorizedErrors(WheelLabError):
    """An iteration plan needs at least one categorized error."""


class InvalidDelta(WheelLabError):
    """An iteration plan delta would produce an invalid config."""
