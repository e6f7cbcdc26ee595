"""Exception hierarchy shared across the package."""


class ParameterError(ValueError):
    """An argument is outside its documented domain."""


class NumericalError(ArithmeticError):
    """A numerical evaluation produced an inconsistent or non-finite result."""


class ConvergenceError(RuntimeError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None,
                 iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularityError(ArithmeticError):
    """A linear system or update rule hit a singular configuration."""


class DegenerateStudentError(ValueError):
    """Classification error is undefined for a student with zero variance."""


class DegenerateFeatureError(ValueError):
    """A feature column has zero training variance and cannot be rescaled."""


class ParseError(ValueError):
    """Malformed binary dataset input."""


class IdxMagicError(ParseError):
    """The IDX magic number does not identify a supported file type."""


class TruncatedStreamError(ParseError):
    """The payload ends before the header-declared size."""
