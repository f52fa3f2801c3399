"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An argument or configuration value violates its contract."""


class DomainError(ValueError):
    """An operation was asked to work on an empty or undefined domain."""


class NumericalError(RuntimeError):
    """A computation produced a singular system or non-finite values."""


class GridTooLargeError(ValueError):
    """A brute-force grid would exceed the configured point budget."""

    def __init__(self, n_points: int, limit: int):
        super().__init__(f"grid has {n_points} points, limit is {limit}")
        self.n_points = n_points
        self.limit = limit
