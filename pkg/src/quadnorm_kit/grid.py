"""Tensor-product grids on the unit cube and analytic test fields.

Coordinates are always stored explicitly, so uniform, periodic and
nonuniform axes flow through the same downstream code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

AXIS_KINDS = ("uniform_endpoint", "periodic", "nonuniform")


class InvalidGridError(ValueError):
    """Raised when grid coordinates violate the construction rules."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Axis1D:
    """One axis of a tensor-product grid on [0, 1]."""

    coords: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in AXIS_KINDS:
            raise InvalidGridError(f"unknown axis kind {self.kind!r}")
        c = _frozen(self.coords)
        object.__setattr__(self, "coords", c)
        if c.ndim != 1:
            raise InvalidGridError("axis coordinates must be one-dimensional")
        n = c.size
        if self.kind == "periodic":
            if n < 1:
                raise InvalidGridError("periodic axis needs n >= 1")
            if not np.array_equal(c, np.arange(n) / n):
                raise InvalidGridError("periodic axis coordinates must be j/n")
            return
        if n < 2:
            raise InvalidGridError(f"axis needs n >= 2 nodes, got {n}")
        if np.any(np.diff(c) <= 0):
            raise InvalidGridError("axis coordinates must be strictly increasing")
        if c[0] != 0.0 or c[-1] != 1.0:
            raise InvalidGridError("endpoint-inclusive axes must start at 0 and end at 1")

    @property
    def n(self) -> int:
        return self.coords.size

    @property
    def spacing(self) -> float:
        """Nominal spacing: 1/(n-1) for endpoint axes, 1/n for periodic, max cell otherwise."""
        if self.kind == "uniform_endpoint":
            return 1.0 / (self.n - 1)
        if self.kind == "periodic":
            return 1.0 / self.n
        return float(np.max(np.diff(self.coords)))

    @property
    def cell_widths(self) -> np.ndarray:
        if self.kind == "periodic":
            return np.full(self.n, 1.0 / self.n)
        return np.diff(self.coords)

    @property
    def length(self) -> float:
        return 1.0

    def signature(self) -> tuple:
        """Hashable identity used as a cache key."""
        return (self.kind, self.n, self.coords.tobytes())

    def __eq__(self, other):
        if not isinstance(other, Axis1D):
            return NotImplemented
        return self.signature() == other.signature()

    def __hash__(self):
        return hash(self.signature())


@dataclass(frozen=True)
class GridSpec:
    """Tensor product of 1D axes covering [0, 1]^d."""

    axes: tuple[Axis1D, ...]

    def __post_init__(self):
        axes = tuple(self.axes)
        if not axes:
            raise InvalidGridError("grid needs at least one axis")
        if len(axes) > 3:
            raise InvalidGridError("grids with more than 3 dimensions are not supported")
        object.__setattr__(self, "axes", axes)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.n for ax in self.axes)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(ax.kind for ax in self.axes)

    @property
    def domain_measure(self) -> float:
        return math.prod(ax.length for ax in self.axes)

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(ax.spacing for ax in self.axes)

    @property
    def h(self) -> float:
        return max(self.spacings)

    def mesh(self) -> list[np.ndarray]:
        """Coordinate arrays broadcast to the full spatial shape (``ij`` indexing)."""
        return np.meshgrid(*(ax.coords for ax in self.axes), indexing="ij")

    def nonuniformity_ratio(self) -> float:
        """Largest over smallest 1D cell width across all axes."""
        widths = np.concatenate([ax.cell_widths for ax in self.axes])
        return float(widths.max() / widths.min())

    def describe(self) -> str:
        return "x".join(f"{ax.n}{ax.kind[0]}" for ax in self.axes)


@dataclass(frozen=True, eq=False)
class FieldTensor:
    """Field samples shaped ``(B, C, n_1, ..., n_d)`` living on ``grid``."""

    data: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 2 + self.grid.ndim:
            raise ValueError(
                f"field has {data.ndim} axes, expected 2 + {self.grid.ndim} for grid {self.grid.describe()}"
            )
        if data.shape[2:] != self.grid.shape:
            raise ValueError(f"spatial shape {data.shape[2:]} does not match grid {self.grid.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("batch and channel sizes must be >= 1")

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> "FieldTensor":
        return FieldTensor(data, self.grid)


def uniform_axis(n: int) -> Axis1D:
    if n < 2:
        raise InvalidGridError(f"endpoint-inclusive axis needs n >= 2, got {n}")
    coords = np.arange(n, dtype=np.float64) / (n - 1)
    coords[-1] = 1.0
    return Axis1D(coords, "uniform_endpoint")


def periodic_axis(n: int) -> Axis1D:
    if n < 1:
        raise InvalidGridError(f"periodic axis needs n >= 1, got {n}")
    return Axis1D(np.arange(n, dtype=np.float64) / n, "periodic")


def uniform_grid(n_per_axis: Sequence[int]) -> GridSpec:
    """Endpoint-inclusive uniform grid with nodes ``j/(n-1)`` on every axis."""
    return GridSpec(tuple(uniform_axis(int(n)) for n in n_per_axis))


def periodic_grid(n_per_axis: Sequence[int]) -> GridSpec:
    """Periodic grid with nodes ``j/n`` (the endpoint 1 is not duplicated)."""
    return GridSpec(tuple(periodic_axis(int(n)) for n in n_per_axis))


def _symmetrize(coords: np.ndarray) -> np.ndarray:
    # mirror the left half so rounding never breaks x_j + x_{n-1-j} = 1
    n = coords.size
    out = coords.copy()
    half = n // 2
    out[n - half :] = 1.0 - coords[:half][::-1]
    if n % 2:
        out[half] = 0.5
    out[0], out[-1] = 0.0, 1.0
    return out


def stretch_map(t: np.ndarray, strength: float) -> np.ndarray:
    """Symmetric tanh stretching of [0, 1] that clusters points near both ends."""
    t = np.asarray(t, dtype=np.float64)
    if strength < 1e-8:
        # the map deviates from the identity by O(strength^2); tiny values underflow tanh
        return t.copy()
    return 0.5 * (np.tanh(strength * (2.0 * t - 1.0)) / np.tanh(strength) + 1.0)


def boundary_refined_coords(n: int, strength: float) -> np.ndarray:
    if strength < 0:
        raise InvalidGridError("stretching strength must be >= 0")
    t = np.arange(n, dtype=np.float64) / (n - 1)
    return _symmetrize(stretch_map(t, strength))


def chebyshev_lobatto_coords(n: int) -> np.ndarray:
    """Chebyshev-Lobatto points mapped affinely from [-1, 1] to [0, 1]."""
    j = np.arange(n, dtype=np.float64)
    return _symmetrize(0.5 * (1.0 - np.cos(np.pi * j / (n - 1))))


def nonuniform_axis(family: str, n: int | None = None, *, strength: float = 2.0, coords=None) -> Axis1D:
    if family == "custom":
        if coords is None:
            raise InvalidGridError("custom family requires explicit coords")
        c = np.asarray(coords, dtype=np.float64)
        if c.size < 3:
            raise InvalidGridError("nonuniform axes need n >= 3")
        return Axis1D(c, "nonuniform")
    if n is None or n < 3:
        raise InvalidGridError(f"nonuniform axes need n >= 3, got {n}")
    if family == "boundary_refined":
        return Axis1D(boundary_refined_coords(n, strength), "nonuniform")
    if family == "chebyshev":
        return Axis1D(chebyshev_lobatto_coords(n), "nonuniform")
    raise InvalidGridError(f"unknown nonuniform family {family!r}")


def nonuniform_grid_1d(family: str, n: int | None = None, *, strength: float = 2.0, coords=None) -> GridSpec:
    """One-dimensional nonuniform grid.

    Parameters
    ----------
    family : {"boundary_refined", "chebyshev", "custom"}
        ``boundary_refined`` applies :func:`stretch_map` with ``strength`` to
        the uniform grid; ``chebyshev`` uses Chebyshev-Lobatto points;
        ``custom`` takes ``coords`` verbatim (must start at 0, end at 1).
    n : int
        Number of nodes (ignored for ``custom``).
    """
    return GridSpec((nonuniform_axis(family, n, strength=strength, coords=coords),))


def tensor_grid(*grids: GridSpec) -> GridSpec:
    """Tensor product of lower-dimensional grids, axes concatenated in order."""
    return GridSpec(tuple(ax for g in grids for ax in g.axes))


# ---------------------------------------------------------------------------
# analytic fields


@dataclass(frozen=True)
class AnalyticField:
    name: str
    func: Callable[..., np.ndarray]
    dims: tuple[int, ...] | None  # None: any dimension
    exact_mean: float | None  # mean over [0,1]^d, None if not registered
    params: dict = field(default_factory=dict)

    def __call__(self, *coords):
        return self.func(*coords)


def _bump1d(x):
    return 16.0 * x**2 * (1.0 - x) ** 2


FIELDS: dict[str, AnalyticField] = {
    "constant": AnalyticField("constant", lambda *r, c=1.0: np.full_like(r[0], c), None, 1.0, {"c": 1.0}),
    "linear": AnalyticField("linear", lambda x, *r: x.copy(), None, 0.5),
    "quadratic1d": AnalyticField("quadratic1d", lambda x: x**2, (1,), 1.0 / 3.0),
    "exp1d": AnalyticField("exp1d", lambda x: np.exp(x), (1,), math.e - 1.0),
    "mixed2d": AnalyticField(
        "mixed2d", lambda x, y: x**2 + np.sin(np.pi * x) * np.cos(np.pi * y), (2,), 1.0 / 3.0
    ),
    "bump2d": AnalyticField("bump2d", lambda x, y: _bump1d(x) * _bump1d(y), (2,), (8.0 / 15.0) ** 2),
    "periodic2d": AnalyticField(
        "periodic2d", lambda x, y: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y), (2,), 0.0
    ),
}


def get_field(field_id: str) -> AnalyticField:
    try:
        return FIELDS[field_id]
    except KeyError:
        raise KeyError(f"unknown field {field_id!r}; choose from {sorted(FIELDS)}") from None


def channel_coefficients(c: int) -> tuple[float, float]:
    """Scale and offset applied to channel ``c`` so channels differ; channel 0 is the raw field."""
    return 1.0 + 0.5 * c, 0.25 * c


def exact_mean(field_id: str, channel: int = 0, *, c: float = 1.0) -> float:
    f = get_field(field_id)
    if f.exact_mean is None:
        raise ValueError(f"field {field_id!r} has no registered exact integral")
    base = c if field_id == "constant" else f.exact_mean
    a, b = channel_coefficients(channel)
    return a * base + b


def evaluate_field(field_id: str, *coords: np.ndarray, c: float = 1.0) -> np.ndarray:
    f = get_field(field_id)
    if f.dims is not None and len(coords) not in f.dims:
        raise ValueError(f"field {field_id!r} is defined for d in {f.dims}, got d={len(coords)}")
    if field_id == "constant":
        return np.full(np.broadcast(*coords).shape, float(c))
    return f(*coords)


def sample_field(field_id: str, grid: GridSpec, channels: int = 1, *, batch: int = 1, c: float = 1.0) -> FieldTensor:
    """Exact nodal samples of a registered analytic field.

    Channel ``k`` holds ``a_k f + b_k`` with the coefficients of
    :func:`channel_coefficients`; batch entries are identical copies.
    """
    if channels < 1 or batch < 1:
        raise ValueError("channels and batch must be >= 1")
    base = evaluate_field(field_id, *grid.mesh(), c=c)
    out = np.empty((batch, channels) + grid.shape)
    for k in range(channels):
        a, b = channel_coefficients(k)
        out[:, k] = base if k == 0 else a * base + b
    return FieldTensor(out, grid)
