"""Exception types raised by the L2SM engine."""


class L2smError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(L2smError, ValueError):
    """A numeric argument is outside its valid domain."""


class InvalidMcsError(L2smError, KeyError):
    """The (table, index) pair does not name an MCS."""

    def __str__(self):
        return str(self.args[0]) if self.args else "invalid MCS"


class CombiningError(L2smError, ValueError):
    """HARQ combining was attempted with an incompatible history."""


class UnsupportedSizeError(L2smError, ValueError):
    """Transport block is larger than the configured maximum."""


class MissingCurveError(L2smError, KeyError):
    """The lookup table has no curve family for the requested MCS."""

    def __str__(self):
        return str(self.args[0]) if self.args else "missing curve"


class LutFormatError(L2smError, ValueError):
    """A lookup table or ensemble file failed schema validation."""


class CalibrationError(L2smError, RuntimeError):
    """Beta search failed; ``trace`` holds the evaluated points."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class ConfigError(L2smError, ValueError):
    """Simulation configuration is invalid."""
