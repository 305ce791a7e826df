"""Exception hierarchy shared by every module of the lab."""


class LabError(Exception):
    """Base class for all errors raised by :mod:`spectral_pollution`."""


class ValidationError(LabError, ValueError):
    """Input violates a documented precondition."""


class NumericalError(LabError):
    """Numerical failure (maps to CLI exit code 3)."""


class ConvergenceError(NumericalError):
    """Iterative eigensolver ran out of its sweep budget.

    Attributes
    ----------
    index : int
        Index of the eigenvalue that failed to converge.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class PencilError(NumericalError):
    """Overlap matrix of a generalized pencil is not positive definite."""


class IllConditionedOverlapError(PencilError):
    """Overlap condition estimate exceeds the configured cap."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class EvaluationError(NumericalError):
    """A quadrature integrand returned a non-finite value."""


class DegenerateBalanceError(NumericalError):
    """Balance operator maps a trial vector to (numerically) zero."""


class ResolutionError(ValidationError):
    """Discretization too coarse for the requested quantity."""


class SchemeInadmissibleError(ValidationError):
    """Scheme not admissible for the given potential."""


class DomainError(ValidationError):
    """Evaluation point or index outside its allowed domain."""


class BandCrossingError(NumericalError):
    """A band group is not isolated from its complement."""


class GaugeError(NumericalError):
    """Wannier functions fail the orthonormality check."""


class NoTheoryError(LabError):
    """No closed-form prediction covers the (model, scheme) pair."""


class ProtocolError(ValidationError):
    """Detection protocol misuse (e.g. too few sizes)."""
