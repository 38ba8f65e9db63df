"""Exception types raised by the solver toolkit."""


class VaripathError(Exception):
    """Base class for toolkit errors."""


class DomainError(VaripathError, ValueError):
    """A point lies outside (or within 1e-12 of the boundary of) the barrier domain."""

    def __init__(self, message: str, group: str = "", index: int = -1):
        super().__init__(message)
        self.group = group
        self.index = index


class FactorizationError(VaripathError, ArithmeticError):
    """Cholesky factorization failed even after diagonal regularization."""

    def __init__(self, message: str, min_eig: float = float("nan")):
        super().__init__(message)
        self.min_eig = min_eig


class InfeasibleError(VaripathError):
    """No strictly feasible starting point exists."""


class IterationLimitError(VaripathError):
    """An iteration cap was reached before the stopping rule fired."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
