"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class NearSingularityError(ArithmeticError):
    """A map is evaluated too close to one of its singularities."""


class DegenerateProjectionError(ArithmeticError):
    """The nearest special-orthogonal matrix is not unique."""


class RankDeficiencyError(ArithmeticError):
    """A linear system that must be nonsingular is (numerically) singular."""


class G2oParseError(ValueError):
    """Malformed g2o input. ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class UnsupportedForDatasetError(RuntimeError):
    """The requested operation needs data the dataset does not carry."""
