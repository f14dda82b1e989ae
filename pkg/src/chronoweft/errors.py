"""Exception hierarchy shared across the package.

Two broad families matter for the CLI exit codes: ValidationError (bad
inputs or configuration, exit code 2) and NumericalError (the math went
wrong at runtime, exit code 3).
"""


class ChronoweftError(Exception):
    """Base class for all package errors."""


class ValidationError(ChronoweftError):
    """Invalid argument, shape, or configuration."""


class NumericalError(ChronoweftError):
    """Numerical failure during a computation."""


class DimensionError(ValidationError):
    """Operand shapes do not conform."""

    def __init__(self, op, shape_a, shape_b):
        super().__init__(f"{op}: shapes {tuple(shape_a)} and {tuple(shape_b)} do not conform")
        self.shapes = (tuple(shape_a), tuple(shape_b))


class SequenceLengthError(ValidationError):
    """Input sequence exceeds the model's maximum length."""


class IntegrationError(NumericalError):
    """Vector field produced a non-finite value; carries the offending state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class DivergenceError(NumericalError):
    """Trajectory left the finite region during integration."""

    def __init__(self, system, step):
        super().__init__(f"system '{system}' diverged at step {step} (|component| > 1e6)")
        self.system = system
        self.step = step


class DegenerateDimensionError(NumericalError):
    """Min-max normalization hit a constant dimension."""


class OptimizerError(NumericalError):
    """Non-finite gradient reached the optimizer; names the parameter."""

    def __init__(self, param_name):
        super().__init__(f"non-finite gradient for parameter '{param_name}'")
        self.param_name = param_name


class TrainingAborted(NumericalError):
    """Training hit a non-finite loss; carries the last good parameters."""

    def __init__(self, message, params=None, log=None):
        super().__init__(message)
        self.params = params
        self.log = log


class RegularizationError(NumericalError):
    """Ridge system is singular; suggests a positive regularizer."""


class DegenerateReservoirError(ValidationError):
    """Reservoir recurrence matrix came out all-zero."""


class InsufficientDataError(ValidationError):
    """Not enough usable samples to fit."""


class UndefinedMetricError(ValidationError):
    """Metric requested on empty input."""


class WindowMismatchError(ValidationError):
    """Occupancy comparison requires equal-length windows."""


class SearchExhaustedError(NumericalError):
    """Every hyperparameter trial failed."""


class ManifestError(ValidationError):
    """Run manifest refers to missing or corrupted artifacts."""
