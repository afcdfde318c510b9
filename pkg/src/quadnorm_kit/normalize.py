"""Normalization forward passes: QuadNorm, BlendQuadNorm and the standard baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import FieldTensor
from .quadrature import WeightField, weight_field
from .stats import Moments, ReductionPattern, blend_moments, uniform_moments, weighted_moments

METHODS = ("none", "layernorm", "instancenorm", "groupnorm", "rmsnorm", "quadnorm", "blendquadnorm")
BASELINES = ("none", "layernorm", "instancenorm", "groupnorm", "rmsnorm")


@dataclass(frozen=True)
class NormSpec:
    """Configuration of one normalization layer.

    ``mode`` and ``num_groups`` select the QuadNorm reduction pattern
    (``num_groups`` also drives GroupNorm). ``rule`` overrides the weight rule
    QuadNorm picks from the grid kind. ``gamma``/``beta`` are per-channel;
    ``None`` means identity.
    """

    method: str = "layernorm"
    mode: str = "layer"
    num_groups: int = 8
    alpha: float = 0.3
    epsilon: float = 1e-5
    gamma: tuple[float, ...] | None = None
    beta: tuple[float, ...] | None = None
    rule: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown normalization method {self.method!r}")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if (self.gamma is None) != (self.beta is None):
            raise ValueError("gamma and beta must be given together")
        if self.gamma is not None:
            object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
            object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
            if len(self.gamma) != len(self.beta):
                raise ValueError("gamma and beta must have the same length")

    @property
    def pattern(self) -> ReductionPattern:
        if self.mode == "group":
            return ReductionPattern("group", self.num_groups)
        return ReductionPattern(self.mode)

    @property
    def label(self) -> str:
        if self.method == "quadnorm" and self.mode != "layer":
            return f"quadnorm-{self.mode}"
        if self.method == "blendquadnorm":
            return f"blendquadnorm-{self.alpha:g}"
        return self.method


def _affine(y: np.ndarray, spec: NormSpec) -> np.ndarray:
    if spec.gamma is None:
        return y
    C = y.shape[1]
    if len(spec.gamma) != C:
        raise ValueError(f"affine parameters have length {len(spec.gamma)}, field has {C} channels")
    shape = (1, C) + (1,) * (y.ndim - 2)
    return y * np.reshape(spec.gamma, shape) + np.reshape(spec.beta, shape)


def normalize(x: FieldTensor, m: Moments, spec: NormSpec) -> FieldTensor:
    """``gamma (x - mu) / sqrt(var + eps) + beta`` with ``m`` broadcast over its slices."""
    if m.mean.shape[0] != x.batch:
        raise ValueError("moments and field disagree on batch size")
    mu, var = m.broadcast(x.data)
    y = (x.data - mu) / np.sqrt(var + spec.epsilon)
    return x.with_data(_affine(y, spec))


def _weights(x: FieldTensor, spec: NormSpec) -> WeightField:
    return weight_field(x.grid, spec.rule)


def quadnorm_forward(x: FieldTensor, mode: str | None = None, spec: NormSpec | None = None) -> FieldTensor:
    """Pure quadrature-weighted normalization in layer, instance or group mode.

    Weights follow the grid: trapezoid on endpoint-inclusive axes, uniform on
    periodic axes and control volumes on nonuniform axes.
    """
    spec = spec or NormSpec("quadnorm")
    if mode is not None and mode != spec.mode:
        spec = NormSpec(**{**spec.__dict__, "mode": mode})
    m = weighted_moments(x, _weights(x, spec), spec.pattern)
    return normalize(x, m, spec)


def blendquadnorm_forward(x: FieldTensor, alpha: float | None = None, spec: NormSpec | None = None) -> FieldTensor:
    spec = spec or NormSpec("blendquadnorm")
    alpha = spec.alpha if alpha is None else alpha
    pattern = ReductionPattern("layer")
    m_ln = uniform_moments(x, pattern)
    m_wln = weighted_moments(x, _weights(x, spec), pattern)
    return normalize(x, blend_moments(m_ln, m_wln, alpha), spec)


def baseline_forward(x: FieldTensor, method: str, spec: NormSpec | None = None) -> FieldTensor:
    """Standard normalizations with uniform point weights."""
    spec = spec or NormSpec(method)
    if method == "none":
        return x
    if method == "layernorm":
        return normalize(x, uniform_moments(x, ReductionPattern("layer")), spec)
    if method == "instancenorm":
        return normalize(x, uniform_moments(x, ReductionPattern("instance")), spec)
    if method == "groupnorm":
        return normalize(x, uniform_moments(x, ReductionPattern("group", spec.num_groups)), spec)
    if method == "rmsnorm":
        axes = tuple(range(2, x.data.ndim))
        ms = (x.data**2).mean(axis=axes, keepdims=True)
        return x.with_data(_affine(x.data / np.sqrt(ms + spec.epsilon), spec))
    raise ValueError(f"{method!r} is not a baseline normalization")


def apply_norm(x: FieldTensor, spec: NormSpec) -> FieldTensor:
    if spec.method == "quadnorm":
        return quadnorm_forward(x, spec.mode, spec)
    if spec.method == "blendquadnorm":
        return blendquadnorm_forward(x, spec.alpha, spec)
    return baseline_forward(x, spec.method, spec)


def norm_moments(x: FieldTensor, spec: NormSpec) -> Moments | None:
    """The statistics ``apply_norm`` would use (``None`` for ``none``/``rmsnorm``)."""
    if spec.method == "quadnorm":
        return weighted_moments(x, _weights(x, spec), spec.pattern)
    if spec.method == "blendquadnorm":
        p = ReductionPattern("layer")
        return blend_moments(uniform_moments(x, p), weighted_moments(x, _weights(x, spec), p), spec.alpha)
    if spec.method in ("layernorm", "instancenorm", "groupnorm"):
        kind = {"layernorm": "layer", "instancenorm": "instance", "groupnorm": "group"}[spec.method]
        return uniform_moments(x, ReductionPattern(kind, spec.num_groups if kind == "group" else 1))
    return None


def residual_gain(x: FieldTensor, fx: FieldTensor, alpha0: float, epsilon: float = 1e-5) -> FieldTensor:
    """Energy-balanced residual ``x + alpha0 sqrt(E|x|^2 / (E|Fx|^2 + eps)) Fx`` per batch element."""
    if x.data.shape != fx.data.shape:
        raise ValueError("x and F(x) must have the same shape")
    if alpha0 < 0:
        raise ValueError("alpha0 must be >= 0")
    axes = tuple(range(1, x.data.ndim))
    ex = (x.data**2).mean(axis=axes, keepdims=True)
    ef = (fx.data**2).mean(axis=axes, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(ef + epsilon > 0, np.sqrt(ex / (ef + epsilon)), 0.0)
    return x.with_data(x.data + alpha0 * gain * fx.data)
