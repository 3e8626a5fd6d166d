"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested function."""


class DegenerateStatisticError(DomainError):
    """The observed statistic maps to an infinite estimate (probability-zero event)."""


class SolverError(RuntimeError):
    """An iterative solver failed to bracket or converge."""


class QuadratureError(SolverError):
    """Adaptive quadrature hit its depth limit before meeting the tolerance."""
