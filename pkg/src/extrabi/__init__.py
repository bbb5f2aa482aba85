"""Extended Rabi model: spectra, ESQPT analysis, quench dynamics and Wigner functions."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    HilbertBasis,
    ModelParams,
    OperatorMatrix,
    ParameterError,
    boson_operator,
    build_basis,
    build_hamiltonian,
    build_hamiltonian_qp,
    quasispin_operator,
    scaled_energy,
    validate_params,
)

__all__ = [
    "HilbertBasis",
    "ModelParams",
    "OperatorMatrix",
    "ParameterError",
    "boson_operator",
    "build_basis",
    "build_hamiltonian",
    "build_hamiltonian_qp",
    "quasispin_operator",
    "scaled_energy",
    "validate_params",
]
