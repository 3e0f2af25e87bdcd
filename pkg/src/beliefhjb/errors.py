"""Exception types carrying machine-readable error codes."""


class BeliefHJBError(Exception):
    """Base class; ``code`` is a stable identifier used in summaries and exit codes."""

    code = "ERROR"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code

    def to_dict(self):
        return {"code": self.code, "message": str(self)}


class ValidationError(BeliefHJBError, ValueError):
    code = "VALIDATION_ERROR"


class DomainError(BeliefHJBError, ValueError):
    code = "DOMAIN"


class GridError(BeliefHJBError, ValueError):
    code = "GRID_TOO_SMALL"


class NoConvergence(BeliefHJBError, RuntimeError):
    code = "NO_CONVERGENCE"

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual

    def to_dict(self):
        d = super().to_dict()
        d.update(iterations=self.iterations, residual=self.residual)
        return d


class PairSearchTooLarge(BeliefHJBError, ValueError):
    code = "PAIR_SEARCH_TOO_LARGE"


class ConfigError(BeliefHJBError, ValueError):
    """Config parse/validation failure; ``line`` is 1-based when known."""

    code = "PARSE_ERROR"

    def __init__(self, message, code=None, line=None, field=None, reason=None):
        super().__init__(message, code)
        self.line = line
        self.field = field
        self.reason = reason

    def to_dict(self):
        d = super().to_dict()
        d.update(line=self.line, field=self.field, reason=self.reason)
        return d


class DependencyError(BeliefHJBError, RuntimeError):
    code = "DEPENDENCY_ERROR"
