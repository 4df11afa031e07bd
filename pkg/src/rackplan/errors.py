"""Exception types shared across the package."""


class RackplanError(Exception):
    """Base class for all package errors."""


class SchemaError(RackplanError):
    """A layout, scenario or snapshot document is malformed."""


class LayoutError(RackplanError):
    """A layout parses but violates a structural invariant."""


class ConfigError(RackplanError):
    """Invalid generator or planner configuration."""


class GeometryError(RackplanError):
    """Requested durations cannot be realized on a grid."""


class NoPath(RackplanError):
    """Path search exhausted its frontier within the horizon."""


class ReservationClash(RackplanError):
    """A path was inserted over an existing reservation."""


class StaleQuery(RackplanError):
    """A reservation query below the table's low watermark."""


class Livelock(RackplanError):
    """The simulation stopped making progress."""


class InvariantViolation(RackplanError):
    """Two robots occupied one cell, or swapped cells, during execution."""
