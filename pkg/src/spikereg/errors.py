"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are inconsistent."""


class DegenerateScaleError(ValueError):
    """Standardization requested with a non-positive standard deviation."""


class EmptyPopulationError(ValueError):
    """Population vote over zero neurons."""


class SolverError(RuntimeError):
    """An iterative solver failed to converge."""


class DivergenceError(RuntimeError):
    """Training or forward evaluation produced non-finite values.

    Carries the last parameter snapshot known to be finite, if any.
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot


class ConfigError(ValueError):
    """Invalid configuration or usage."""


class DataError(ValueError):
    """Missing or malformed input data."""
