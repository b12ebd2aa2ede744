"""Exception types shared across the package."""


class SketchError(Exception):
    """Base class for all errors raised by streamsketch."""


class ParameterError(SketchError, ValueError):
    """A constructor or function argument is out of its valid range."""


class ShapeError(SketchError, ValueError):
    """A point has the wrong dimension or is not finite."""


class OrderingError(SketchError, ValueError):
    """Timestamps went backwards."""


class DomainError(SketchError, ValueError):
    """A formula was evaluated outside its domain."""


class UniquenessError(SketchError, KeyError):
    """A point id was inserted twice."""


class CapacityError(SketchError):
    """More points were streamed than the declared upper bound n."""


class ConfigError(SketchError):
    """An experiment configuration is invalid."""


class FormatError(SketchError):
    """A data file is malformed.

    ``offset`` is a byte offset (fvecs) and ``line`` a 1-based line number
    (CSV); whichever does not apply is ``None``.
    """

    def __init__(self, message, *, offset=None, line=None):
        super().__init__(message)
        self.offset = offset
        self.line = line
