"""Quadrature-weighted normalization statistics and discretization-consistency tooling."""

from .grid import (
    FIELDS,
    Axis1D,
    FieldTensor,
    GridSpec,
    InvalidGridError,
    nonuniform_grid_1d,
    periodic_grid,
    sample_field,
    tensor_grid,
    uniform_grid,
)
from .normalize import NormSpec, apply_norm, blendquadnorm_forward, quadnorm_forward
from .quadrature import CompatibilityError, WeightField, weight_field
from .stats import Moments, ReductionPattern, blend_moments, uniform_moments, weighted_moments

__version__ = "0.1.0"

__all__ = [
    "FIELDS",
    "Axis1D",
    "CompatibilityError",
    "FieldTensor",
    "GridSpec",
    "InvalidGridError",
    "Moments",
    "NormSpec",
    "ReductionPattern",
    "WeightField",
    "apply_norm",
    "blend_moments",
    "blendquadnorm_forward",
    "nonuniform_grid_1d",
    "periodic_grid",
    "quadnorm_forward",
    "sample_field",
    "tensor_grid",
    "uniform_grid",
    "uniform_moments",
    "weight_field",
    "weighted_moments",
]
