"""Exception hierarchy for tubeplan.

Every failure mode that callers are expected to handle has its own class;
the CLI maps them to exit codes (configuration problems vs runtime aborts).
"""


class TubeplanError(Exception):
    """Base class for all tubeplan errors."""


class ConfigurationError(TubeplanError):
    """Invalid configuration, dimension mismatch, or malformed input."""


class DegenerateGeometryError(TubeplanError):
    """Ego and environment state coincide; interaction direction undefined."""


class InsufficientSamplesError(TubeplanError):
    """Sample count too small for the requested calibration level."""


class InvalidGainError(TubeplanError):
    """Closed-loop gain outside [0, 1); the explicit update is undefined."""


class NoSafeRadiusError(TubeplanError):
    """No radius within the admissible interval satisfies the safety inequality."""


class SensitivityUnavailableError(TubeplanError):
    """A sensitivity estimate could not be formed (e.g. infeasible probe solve)."""


class InitializationError(TubeplanError):
    """The initial radius does not admit a feasible plan."""
