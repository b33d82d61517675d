"""Exception hierarchy shared by all modules."""


class ErgoprocError(Exception):
    """Base class for library errors."""


class UsageError(ErgoprocError, ValueError):
    """Bad arguments: dimension mismatch, invalid parameters, wrong driver kind."""


class DestructiveImageError(ErgoprocError, ArithmeticError):
    """A map sent a state to (numerically) zero trace.

    ``index`` is the path index of the offending map when known, ``witness``
    the state that was annihilated.
    """

    def __init__(self, message, index=None, witness=None):
        super().__init__(message)
        self.index = index
        self.witness = witness


class ConvergenceError(ErgoprocError, ArithmeticError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DriverError(ErgoprocError, ValueError):
    """A driver could not be constructed (reducible chain, rational rotation, ...)."""


class ResourceError(ErgoprocError, MemoryError):
    """A requested window or ensemble exceeds the memory budget."""


class ExperimentError(ErgoprocError, RuntimeError):
    """Too many replicas failed, or a horizon was exhausted."""


class ConfigError(UsageError):
    """Invalid experiment or driver config; ``pointer`` is the JSON pointer of the bad field."""

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
