"""Exception hierarchy shared across the package."""


class FieldswarmError(Exception):
    """Base class for all package-specific errors."""


class BoundsError(FieldswarmError):
    """A cell or coordinate fell outside the grid."""


class ValidationError(FieldswarmError):
    """Construction-time invariant violated."""


class GenerationError(FieldswarmError):
    """Environment synthesis produced a degenerate field; retry with a new seed."""


class LayoutError(FieldswarmError):
    """An obstacle layout disconnected the free space at this grid size."""


class InsufficientDataError(FieldswarmError):
    """Not enough measurements for the requested geostatistical operation."""


class NoPathError(FieldswarmError):
    """Route planning failed: the goal is unreachable from the start."""


class EpisodeError(FieldswarmError):
    """A simulation episode reached an unrecoverable state."""


class SessionError(FieldswarmError):
    """A live-session operation was rejected (closed session, bad state, ...)."""


class NotFoundError(SessionError):
    """The referenced session or agent does not exist."""


class OutOfFieldError(SessionError):
    """A GPS fix landed beyond the field boundary plus tolerance."""


class ReplayError(FieldswarmError):
    """An event log is corrupt (gap or malformed record) and cannot be replayed."""
