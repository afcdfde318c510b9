"""Channel-wise linear resampling between grids of the same kind.

Each axis is resampled by a dense matrix, so the operator is exactly
linear and separable. Rows of every matrix sum to one, which makes
constant fields pass through unchanged.
"""

from __future__ import annotations

import threading

import numpy as np

from .grid import Axis1D, FieldTensor, GridSpec

METHODS = ("bilinear", "bicubic")
KEYS_A = -0.5
_SNAP = 1e-12

_cache: dict[tuple, np.ndarray] = {}
_lock = threading.Lock()


def keys_kernel(s: np.ndarray, a: float = KEYS_A) -> np.ndarray:
    """Cubic convolution kernel (Catmull-Rom for ``a = -0.5``)."""
    s = np.abs(s)
    out = np.zeros_like(s)
    near = s <= 1
    far = (s > 1) & (s < 2)
    sn, sf = s[near], s[far]
    out[near] = (a + 2) * sn**3 - (a + 3) * sn**2 + 1
    out[far] = a * sf**3 - 5 * a * sf**2 + 8 * a * sf - 4 * a
    return out


def _ghost(index: int, n: int) -> dict[int, float]:
    """Source combination standing in for an out-of-range node.

    Quadratic extrapolation (linear when n == 2) keeps the scheme
    third-order at the boundary and exact on constants.
    """
    if 0 <= index < n:
        return {index: 1.0}
    if index < 0:
        base, step = 0, 1
    else:
        base, step = n - 1, -1
    if n == 2:
        return {base: 2.0, base + step: -1.0}
    return {base: 3.0, base + step: -3.0, base + 2 * step: 1.0}


def _endpoint_matrix(src: Axis1D, tgt: Axis1D, method: str) -> np.ndarray:
    n = src.n
    pos = tgt.coords * (n - 1)
    snapped = np.round(pos)
    pos = np.where(np.abs(pos - snapped) < _SNAP, snapped, pos)
    M = np.zeros((tgt.n, n))
    for row, p in enumerate(pos):
        i = int(min(max(np.floor(p), 0), n - 2))
        t = p - i
        if method == "bilinear":
            M[row, i] += 1 - t
            M[row, i + 1] += t
            continue
        offsets = np.arange(-1, 3)
        kw = keys_kernel(t - offsets)
        for off, k in zip(offsets, kw):
            if k == 0.0:
                continue
            for j, c in _ghost(i + off, n).items():
                M[row, j] += k * c
    return M


def _periodic_matrix(src: Axis1D, tgt: Axis1D, method: str) -> np.ndarray:
    n = src.n
    pos = tgt.coords * n
    snapped = np.round(pos)
    pos = np.where(np.abs(pos - snapped) < _SNAP, snapped, pos)
    M = np.zeros((tgt.n, n))
    for row, p in enumerate(pos):
        i = int(np.floor(p))
        t = p - i
        if method == "bilinear":
            M[row, i % n] += 1 - t
            M[row, (i + 1) % n] += t
            continue
        offsets = np.arange(-1, 3)
        for off, k in zip(offsets, keys_kernel(t - offsets)):
            M[row, (i + off) % n] += k
    return M


def axis_matrix(src: Axis1D, tgt: Axis1D, method: str = "bicubic") -> np.ndarray:
    """Matrix mapping samples on ``src`` to samples on ``tgt``."""
    if method not in METHODS:
        raise ValueError(f"unknown interpolation method {method!r}")
    if src.kind != tgt.kind or src.kind == "nonuniform":
        raise ValueError(f"cannot resample {src.kind} axis onto {tgt.kind} axis")
    key = (method, src.signature(), tgt.signature())
    M = _cache.get(key)
    if M is None:
        if src.kind == "periodic":
            M = _periodic_matrix(src, tgt, method)
        else:
            M = _endpoint_matrix(src, tgt, method)
        M.setflags(write=False)
        with _lock:
            M = _cache.setdefault(key, M)
    return M


_LETTERS = "ijk"


def apply_axis_matrices(data: np.ndarray, mats) -> np.ndarray:
    out = data
    for axis, M in enumerate(mats):
        if M is None:
            continue
        letters = list(_LETTERS[: data.ndim - 2])
        src = "ab" + "".join(letters)
        letters[axis] = "z"
        # einsum without BLAS keeps results independent of BLAS threading
        out = np.einsum(f"z{_LETTERS[axis]},{src}->ab{''.join(letters)}", M, out, optimize=False)
    return out


def interpolate(x: FieldTensor, target: GridSpec, method: str = "bicubic") -> FieldTensor:
    """Resample ``x`` onto ``target`` channel by channel."""
    if target.ndim != x.grid.ndim:
        raise ValueError(f"dimension mismatch: field is {x.grid.ndim}-d, target is {target.ndim}-d")
    if x.grid.kinds != target.kinds:
        raise ValueError(f"grid kinds differ: {x.grid.kinds} vs {target.kinds}")
    mats = []
    for s, t in zip(x.grid.axes, target.axes):
        mats.append(None if s == t else axis_matrix(s, t, method))
    return FieldTensor(apply_axis_matrices(x.data, mats), target)
