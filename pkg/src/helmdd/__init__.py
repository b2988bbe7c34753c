"""Two-level overlapping Schwarz solvers for the 2D heterogeneous Helmholtz equation."""

from .errors import ConfigurationError, NumericalError, SingularMatrixError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "NumericalError", "SingularMatrixError", "__version__"]
