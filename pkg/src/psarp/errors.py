"""Exception hierarchy shared by all psarp modules."""


class PsarpError(Exception):
    """Base class for every error raised by psarp."""


class EvaluationError(PsarpError):
    """An element function returned a non-finite value."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class SingularDerivativeError(PsarpError, ValueError):
    """Derivative of |t|^q requested at t = 0, or a model branch undefined there."""


class ProjectionError(PsarpError):
    """Dykstra's algorithm did not reach the requested accuracy."""

    def __init__(self, message, residual=None, sweeps=None):
        super().__init__(message)
        self.residual = residual
        self.sweeps = sweeps


class EmptySetError(PsarpError, ValueError):
    """A feasible set could not be certified non-empty."""


class ChiSolverError(PsarpError):
    """The dual bisection for the criticality measure failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StepFailure(PsarpError):
    """The step subsolver hit its iteration cap before the stopping rule held."""

    def __init__(self, message, best_step=None, inner_iters=None):
        super().__init__(message)
        self.best_step = best_step
        self.inner_iters = inner_iters


class ContractViolation(PsarpError, AssertionError):
    """An internal pre- or post-condition was broken (indicates a bug)."""


class ConfigError(PsarpError, ValueError):
    """Invalid solver/model configuration or a rejected mode combination."""


class ProblemParseError(PsarpError, ValueError):
    """A problem descriptor failed validation; ``location`` is the JSON path."""

    def __init__(self, message, location=""):
        super().__init__(f"{location or '<root>'}: {message}")
        self.location = location


class SolveFailure(PsarpError):
    """A solver run aborted; the partial trace is attached."""

    def __init__(self, message, trace=None, cause=None):
        super().__init__(message)
        self.trace = trace or []
        self.cause = cause
