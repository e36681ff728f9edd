"""Hybrid tensor-train stochastic finite volume solvers for 1D conservation laws."""

from .errors import (
    AdmissibilityError,
    ConfigurationError,
    DegeneracyError,
    EvaluationError,
    ResourceError,
    ShapeError,
    TTSFVError,
)
from .tt import (
    TensorTrain,
    TruncationPolicy,
    add,
    coefficient_count,
    contract_weights,
    element,
    evaluate,
    hadamard,
    norm_frobenius,
    round_tt,
    scale,
    sub,
    to_dense,
    tt_from_dense,
)

__version__ = "0.1.0"
