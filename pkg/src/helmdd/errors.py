class ConfigurationError(ValueError):
    """Invalid problem, decomposition or scenario configuration."""


class NumericalError(RuntimeError):
    """A numerical kernel failed (singular factor, eigensolver failure, ...)."""


class SingularMatrixError(NumericalError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class AssemblyError(ValueError):
    pass
