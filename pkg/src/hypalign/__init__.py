"""Hierarchical cross-modal alignment on hyperbolic manifolds of different curvature."""
from . import entailment, features, lorentz, manifold, taxonomy, trainer
from ._accel import USE_NUMBA
from .errors import (
    ContractViolation,
    DegenerateGeometryError,
    HypalignError,
    MagnitudeOverflowError,
    NonFiniteLossError,
    NumericDomainError,
    NumericError,
    RootBracketError,
    SingularHessianError,
    TooLargeError,
)

__version__ = "0.1.0"

__all__ = [
    "ContractViolation",
    "DegenerateGeometryError",
    "HypalignError",
    "MagnitudeOverflowError",
    "NonFiniteLossError",
    "NumericDomainError",
    "NumericError",
    "RootBracketError",
    "SingularHessianError",
    "TooLargeError",
    "USE_NUMBA",
    "entailment",
    "features",
    "lorentz",
    "manifold",
    "taxonomy",
    "trainer",
]
