"""Exception types shared across the package."""


class GapForgeError(Exception):
    pass


class DomainError(GapForgeError, ValueError):
    """A kernel or integrand was evaluated outside its admissible range."""


class ConvergenceError(GapForgeError, RuntimeError):
    """An iteration stopped before meeting its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConfigError(GapForgeError, ValueError):
    pass


class SplitViolation(GapForgeError):
    """The Z-channel kernel row changes sign more than once."""


class BracketError(GapForgeError, ValueError):
    """Bracket or precondition failure (bisection endpoints, shift validity)."""
