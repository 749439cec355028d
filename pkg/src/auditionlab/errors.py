"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad argument or malformed data structure."""


class BoundsError(ValidationError):
    """An action would exceed its per-step limit or leave the world box."""


class GeometryError(ValidationError):
    """Degenerate sensing geometry, e.g. a source inside the range clamp of a mic."""


class DegenerateBeliefError(RuntimeError):
    """All belief mass underflowed; the caller should reset and log."""


class ImpossibleObservationError(RuntimeError):
    """A discrete observation has zero probability under the current belief."""


class ConvergenceError(RuntimeError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class NumericsError(RuntimeError):
    """A linear-algebra step failed (singular matrix, ill conditioning)."""


class TooLargeError(ValidationError):
    """A tabular model would exceed the configured size cap."""


class ConfigError(ValidationError):
    """Scenario file failed to parse or validate."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class PolicyProtocolError(RuntimeError):
    """A policy returned something outside the action space."""
