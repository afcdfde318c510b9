"""Uniform, quadrature-weighted and blended normalization moments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import FieldTensor
from .quadrature import WeightField

PATTERN_KINDS = ("instance", "layer", "group")


@dataclass(frozen=True)
class ReductionPattern:
    kind: str = "layer"
    num_groups: int = 1

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ValueError(f"unknown reduction pattern {self.kind!r}")
        if self.kind == "group" and self.num_groups < 1:
            raise ValueError("num_groups must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "ReductionPattern":
        """``"layer"``, ``"instance"`` or ``"group:G"``."""
        if text.startswith("group"):
            _, _, g = text.partition(":")
            return cls("group", int(g or 8))
        return cls(text)

    def slices(self, channels: int) -> tuple[int, int]:
        """(number of reduced slices, channels per slice) for ``channels`` channels."""
        if self.kind == "instance":
            return channels, 1
        if self.kind == "layer":
            return 1, channels
        if channels % self.num_groups:
            raise ValueError(f"channels ({channels}) must be divisible by num_groups ({self.num_groups})")
        return self.num_groups, channels // self.num_groups

    def __str__(self):
        return f"group:{self.num_groups}" if self.kind == "group" else self.kind


@dataclass(frozen=True, eq=False)
class Moments:
    """Mean and population variance per reduced slice.

    Shapes: ``(B, C)`` for instance, ``(B,)`` for layer, ``(B, G)`` for group.
    """

    mean: np.ndarray
    variance: np.ndarray
    pattern: ReductionPattern
    weighted: bool

    def broadcast(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-channel mean and variance broadcastable against ``x`` of shape (B, C, *spatial)."""
        B, C = x.shape[:2]
        S, m = self.pattern.slices(C)
        mu = np.repeat(self.mean.reshape(B, S), m, axis=1)
        var = np.repeat(self.variance.reshape(B, S), m, axis=1)
        extra = (1,) * (x.ndim - 2)
        return mu.reshape(B, C, *extra), var.reshape(B, C, *extra)


def _grouped(x: np.ndarray, pattern: ReductionPattern) -> np.ndarray:
    B, C = x.shape[:2]
    S, m = pattern.slices(C)
    return x.reshape(B, S, m, *x.shape[2:])


def _squeeze(a: np.ndarray, pattern: ReductionPattern) -> np.ndarray:
    return a[:, 0] if pattern.kind == "layer" else a


def uniform_moments(x: FieldTensor, pattern: ReductionPattern) -> Moments:
    """Plain arithmetic mean and population variance over the pattern's axes."""
    xg = _grouped(x.data, pattern)
    axes = tuple(range(2, xg.ndim))
    mu = xg.mean(axis=axes, keepdims=True)
    var = ((xg - mu) ** 2).mean(axis=axes)
    return Moments(_squeeze(mu.reshape(var.shape), pattern), _squeeze(var, pattern), pattern, False)


def weighted_moments(x: FieldTensor, w: WeightField, pattern: ReductionPattern) -> Moments:
    """Quadrature-weighted mean and variance.

    ``mu = sum(w x) / (m sum(w))`` and ``v = sum(w (x - mu)^2) / (m sum(w))``
    where ``m`` is the number of channels pooled into each slice.
    """
    weights = np.asarray(w.weights if isinstance(w, WeightField) else w, dtype=np.float64)
    if weights.shape != x.data.shape[2:]:
        raise ValueError(f"weights of shape {weights.shape} do not match spatial shape {x.data.shape[2:]}")
    xg = _grouped(x.data, pattern)
    m = xg.shape[2]
    axes = tuple(range(2, xg.ndim))
    denom = m * weights.sum()
    mu = (xg * weights).sum(axis=axes, keepdims=True) / denom
    var = (((xg - mu) ** 2) * weights).sum(axis=axes) / denom
    return Moments(_squeeze(mu.reshape(var.shape), pattern), _squeeze(var, pattern), pattern, True)


def blend_moments(m_ln: Moments, m_wln: Moments, alpha: float) -> Moments:
    """Moments of the mixture ``alpha p_LN + (1 - alpha) p_WLN`` (law of total variance)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if m_ln.pattern != m_wln.pattern or m_ln.mean.shape != m_wln.mean.shape:
        raise ValueError("blended moments must share pattern and shape")
    if alpha == 1.0:
        return m_ln
    if alpha == 0.0:
        return m_wln
    d = m_ln.mean - m_wln.mean
    mean = alpha * m_ln.mean + (1 - alpha) * m_wln.mean
    var = alpha * m_ln.variance + (1 - alpha) * m_wln.variance + alpha * (1 - alpha) * d**2
    return Moments(mean, var, m_ln.pattern, True)
