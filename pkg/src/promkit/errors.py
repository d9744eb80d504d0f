"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes: configuration problems exit
with 2, numerical failures with 3, artifact/IO failures with 4.
"""


class PromkitError(Exception):
    """Base class for all toolkit-specific failures."""


class InvalidInputError(PromkitError, ValueError):
    """Numerical input violates a documented precondition."""


class SingularSystemError(PromkitError, RuntimeError):
    """A linear system is singular or rank deficient.

    ``column`` holds the offending column index when known.
    """

    def __init__(self, message: str, column: int | None = None):
        super().__init__(message)
        self.column = column


class DivergenceError(PromkitError, RuntimeError):
    """An iterative solver exhausted its iteration budget.

    ``trace`` holds the iteration history up to the failure.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigError(PromkitError, ValueError):
    """Configuration or solver-precondition violation."""


class ArtifactError(PromkitError, RuntimeError):
    """Artifact I/O or hash-consistency failure."""


class UndefinedMetricError(PromkitError, ValueError):
    """An error metric is undefined, e.g. zero reference norm."""
