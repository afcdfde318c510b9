"""1D quadrature weights and their tensor products.

All weights are scaled for mean estimation on [0, 1], so every weight
field sums to the domain measure (1 for the unit cube).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .grid import Axis1D, GridSpec

RULES = ("uniform", "trapezoid", "simpson", "boole", "control_volume")


class CompatibilityError(ValueError):
    """Node count incompatible with a composite Newton-Cotes rule."""


@dataclass(frozen=True, eq=False)
class WeightField:
    weights: np.ndarray
    rule: str
    grid: GridSpec

    @property
    def total(self) -> float:
        return float(self.weights.sum())


_cache: dict[tuple, np.ndarray] = {}
_cache_lock = threading.Lock()


def _cached(rule: str, axis: Axis1D, build) -> np.ndarray:
    key = (rule, axis.signature())
    w = _cache.get(key)
    if w is None:
        w = np.asarray(build(), dtype=np.float64)
        w.setflags(write=False)
        with _cache_lock:
            w = _cache.setdefault(key, w)
    return w


def clear_cache():
    with _cache_lock:
        _cache.clear()


def uniform_weights_1d(axis: Axis1D) -> np.ndarray:
    """Equal point weights ``1/n`` (what standard normalization layers use)."""
    return _cached("uniform", axis, lambda: np.full(axis.n, 1.0 / axis.n))


def trapezoid_weights_1d(axis: Axis1D) -> np.ndarray:
    """Composite trapezoid weights.

    Endpoint-inclusive axes get ``h/2`` at both ends and ``h`` inside with
    ``h = 1/(n-1)``. On a periodic axis every node gets ``1/n``.
    """
    if axis.kind == "nonuniform":
        raise ValueError("trapezoid weights need a uniform axis; use control_volume_weights_1d for nonuniform axes")
    if axis.kind == "periodic":
        return _cached("trapezoid", axis, lambda: np.full(axis.n, 1.0 / axis.n))

    def build():
        h = 1.0 / (axis.n - 1)
        w = np.full(axis.n, h)
        w[0] = w[-1] = h / 2
        return w

    return _cached("trapezoid", axis, build)


_PANELS = {
    "simpson": (2, np.array([1.0, 4.0, 1.0]) / 3.0),
    "boole": (4, np.array([7.0, 32.0, 12.0, 32.0, 7.0]) * 2.0 / 45.0),
}


def newton_cotes_weights_1d(rule: str, axis: Axis1D) -> np.ndarray:
    """Composite Simpson or Boole weights on an endpoint-inclusive uniform axis."""
    if rule not in _PANELS:
        raise ValueError(f"unknown Newton-Cotes rule {rule!r}")
    if axis.kind != "uniform_endpoint":
        raise ValueError(f"{rule} weights need an endpoint-inclusive uniform axis, got {axis.kind}")
    width, panel = _PANELS[rule]
    intervals = axis.n - 1
    if intervals % width:
        raise CompatibilityError(f"{rule} needs (n-1) divisible by {width}, got n={axis.n}")

    def build():
        h = 1.0 / intervals
        w = np.zeros(axis.n)
        for start in range(0, intervals, width):
            w[start : start + width + 1] += panel * h
        return w

    return _cached(rule, axis, build)


def control_volume_weights_1d(axis: Axis1D) -> np.ndarray:
    """Half-cell (control-volume) weights ``(x_{i+1} - x_{i-1})/2``."""
    if axis.kind == "periodic":
        return trapezoid_weights_1d(axis)
    if axis.n < 2:
        raise ValueError("control-volume weights need n >= 2")

    def build():
        x = axis.coords
        w = np.empty(axis.n)
        w[0] = (x[1] - x[0]) / 2
        w[-1] = (x[-1] - x[-2]) / 2
        w[1:-1] = (x[2:] - x[:-2]) / 2
        return w

    return _cached("control_volume", axis, build)


def weights_1d(rule: str, axis: Axis1D) -> np.ndarray:
    if rule == "uniform":
        return uniform_weights_1d(axis)
    if rule == "trapezoid":
        return trapezoid_weights_1d(axis)
    if rule in _PANELS:
        return newton_cotes_weights_1d(rule, axis)
    if rule == "control_volume":
        return control_volume_weights_1d(axis)
    raise ValueError(f"unknown quadrature rule {rule!r}; choose from {RULES}")


def default_rule(axis: Axis1D) -> str:
    """Rule a quadrature-weighted layer picks for an axis of this kind."""
    return "control_volume" if axis.kind == "nonuniform" else "trapezoid"


def tensor_product_weights(per_axis, grid: GridSpec, rule: str | None = None) -> WeightField:
    per_axis = [np.asarray(w, dtype=np.float64) for w in per_axis]
    if len(per_axis) != grid.ndim:
        raise ValueError(f"got {len(per_axis)} weight vectors for a {grid.ndim}-d grid")
    for w, ax in zip(per_axis, grid.axes):
        if w.shape != (ax.n,):
            raise ValueError(f"weight vector of length {w.size} does not match axis with {ax.n} nodes")
    out = per_axis[0]
    for w in per_axis[1:]:
        out = np.multiply.outer(out, w)
    return WeightField(out, rule or "mixed", grid)


def weight_field(grid: GridSpec, rule: str | None = None) -> WeightField:
    """Weights for ``grid`` under ``rule``; ``None`` picks the kind-appropriate rule per axis."""
    if rule is None:
        rules = [default_rule(ax) for ax in grid.axes]
        # periodic trapezoid weights are uniform, recorded as such
        rules = ["uniform" if ax.kind == "periodic" else r for r, ax in zip(rules, grid.axes)]
        vecs = [weights_1d(default_rule(ax), ax) for ax in grid.axes]
        name = rules[0] if len(set(rules)) == 1 else "mixed"
        return tensor_product_weights(vecs, grid, name)
    return tensor_product_weights([weights_1d(rule, ax) for ax in grid.axes], grid, rule)
