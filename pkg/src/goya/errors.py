"""Exception hierarchy shared across the package.

Every error raised on purpose derives from GoyaError so callers (and the
command line frontend) can catch one type and report a clean message.
"""


class GoyaError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(GoyaError):
    """Operands have incompatible or unexpected dimensions."""


class StateError(GoyaError):
    """Operation called out of order, e.g. backward without a forward."""


class NumericsError(GoyaError):
    """Non-finite values appeared where finite ones are required."""


class DegenerateInputError(GoyaError):
    """Input is structurally valid but numerically degenerate."""


class FormatError(GoyaError):
    """A binary or text artifact does not conform to its file format."""


class DataError(GoyaError):
    """Dataset contents violate an invariant (ids, labels, alignment)."""


class ConfigError(GoyaError):
    """Invalid or inconsistent configuration value."""


class UsageError(GoyaError):
    """Malformed command line invocation."""
