"""Exception hierarchy shared by all modules."""


class DistcoopError(Exception):
    """Base class for errors raised by this package."""


class GraphError(DistcoopError, ValueError):
    """Invalid graph (self-loop, non-binary entry, bad shape)."""


class PreconditionError(DistcoopError, ValueError):
    """An operation was called on inputs that violate its assumptions."""


class SynthesisError(DistcoopError, RuntimeError):
    """Gain design or a matrix-equation solve failed."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class LocalityError(DistcoopError, KeyError):
    """A node tried to use data from a node that is not its neighbor."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DivergenceError(DistcoopError, ArithmeticError):
    """Integration produced a non-finite or exploding state."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ConfigError(DistcoopError, ValueError):
    """Scenario configuration could not be parsed or validated."""
