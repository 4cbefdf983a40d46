"""Exception types raised by :mod:`fracevo`."""


class FracEvoError(Exception):
    """Base class for all library errors."""


class NonConvergence(FracEvoError):
    """A truncated series could not certify its remainder within budget."""


class DimensionMismatch(FracEvoError, ValueError):
    pass


class NotPermutable(FracEvoError):
    """Raised when a commuting-operator solver receives AB != BA."""


class BoundViolation(FracEvoError):
    """A theoretical growth bound was violated at one or more grid nodes.

    Since the bounds are theorems, this indicates an implementation bug.
    """

    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = list(nodes)


class GridTooCoarse(FracEvoError, ValueError):
    pass


class ConfigError(FracEvoError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
