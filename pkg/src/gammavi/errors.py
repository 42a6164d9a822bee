"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a function."""


class SolverError(ArithmeticError):
    """An iterative solver failed to reach its tolerance."""


class NonFiniteGradientError(FloatingPointError):
    """A stochastic gradient contained NaN or infinity."""

    def __init__(self, message, coordinate=None, iteration=None):
        super().__init__(message)
        self.coordinate = coordinate
        self.iteration = iteration


class LayoutMismatchError(ValueError):
    """A parameter file does not match the requested model layout."""
