"""Exception types shared across the package."""


class CrossflowError(Exception):
    """Base class for all package-specific errors."""


class ScenarioError(CrossflowError, ValueError):
    """Scenario document is malformed or violates a semantic invariant.

    ``field`` carries the path of the offending entry (e.g. ``vehicles[1].initial``)
    when one can be pinpointed.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class SingularityError(CrossflowError, ValueError):
    """Vehicle model evaluated at (or driven through) non-positive speed."""


class DomainError(CrossflowError, ValueError):
    """A differentiable primitive was evaluated outside its domain."""


class SolverFailure(CrossflowError, RuntimeError):
    """An iterative solver failed to produce a usable result.

    ``diagnostics`` is a free-form dict (iteration counts, residuals, ...).
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
