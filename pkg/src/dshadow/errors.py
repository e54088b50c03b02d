"""Exception hierarchy shared by all dshadow modules."""


class DShadowError(Exception):
    """Base class for every error raised by the toolkit."""


class DimensionError(DShadowError, ValueError):
    """Shapes of segments, matrices or systems do not agree."""


class ArgumentError(DShadowError, ValueError):
    """An argument violates an operation's precondition."""


class DomainError(DShadowError, ValueError):
    """A point lies outside the region where a function is defined."""


class DepthError(DShadowError, ValueError):
    """A truncated history is too short for the requested operation."""

    def __init__(self, message, required_depth=None):
        super().__init__(message)
        self.required_depth = required_depth


class HorizonError(DShadowError, ValueError):
    """A summation horizon is too short for the requested tail tolerance."""

    def __init__(self, message, required_horizon=None):
        super().__init__(message)
        self.required_horizon = required_horizon


class StateError(DShadowError, RuntimeError):
    """An operation was called on an object in the wrong state (e.g. not hyperbolic)."""


class UnsupportedError(DShadowError, NotImplementedError):
    """The input is valid but outside what the implementation handles."""


class NumericError(DShadowError, ArithmeticError):
    """A numerical procedure failed or produced an unreliable answer."""


class ValidationError(DShadowError, ValueError):
    """A scenario or configuration document is malformed.

    ``fields`` lists every offending field as ``(path, message)`` pairs so the
    caller can report all problems at once.
    """

    def __init__(self, fields):
        self.fields = list(fields)
        msg = "; ".join(f"{path}: {why}" for path, why in self.fields)
        super().__init__(msg or "invalid configuration")
