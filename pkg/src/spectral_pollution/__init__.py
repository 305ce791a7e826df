"""Spectral pollution laboratory.

Galerkin approximations of gapped self-adjoint operators (rotated-frame toy
operators, radial Dirac channels, 1D periodic Schrodinger operators with a
defect), a detector for persistent spurious gap eigenvalues and closed-form
predicted spurious sets to compare against.
"""

from .errors import (
    LabError,
    NoTheoryError,
    NumericalError,
    ProtocolError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "LabError",
    "NoTheoryError",
    "NumericalError",
    "ProtocolError",
    "ValidationError",
    "__version__",
]
