"""Forward-only frozen neural-operator stack for cross-resolution transfer studies.

lift -> L x [mixing T -> normalization -> activation] -> projection

The mixing ``T`` is a pointwise linear map plus a low-pass channel mixing
on tensor-product cosine modes ``cos(k pi x)``. Mode coefficients are
quadrature-weighted inner products, so ``T`` is defined on any grid and
is second-order consistent on endpoint-inclusive grids.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import erf

from .consistency import comparison_norm
from .grid import FieldTensor, GridSpec, sample_field, uniform_grid
from .normalize import NormSpec, apply_norm, residual_gain
from .parallel import pmap
from .quadrature import weight_field
from .resample import interpolate

ACTIVATIONS = ("gelu", "tanh", "identity")
SPECTRAL_NORM_CAP = 0.9


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


_ACT = {"gelu": gelu, "tanh": np.tanh, "identity": lambda x: x}


@dataclass(frozen=True)
class StackSpec:
    depth: int = 4
    width: int = 16
    modes: int = 6
    norm: NormSpec = field(default_factory=lambda: NormSpec("layernorm"))
    activation: str = "gelu"
    seed: int = 0
    residual_gain: tuple[float, float] | None = None
    in_channels: int = 1
    coord_channels: bool = True
    hidden: int = 128

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.width < 1 or self.modes < 1 or self.in_channels < 1 or self.hidden < 1:
            raise ValueError("width, modes, in_channels and hidden must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True, eq=False)
class Block:
    pointwise: np.ndarray  # (C, C)
    bias: np.ndarray  # (C,)
    spectral: np.ndarray  # (modes, ..., C, C), one matrix per mode multi-index


@dataclass(frozen=True, eq=False)
class Stack:
    spec: StackSpec
    lift_w: np.ndarray
    lift_b: np.ndarray
    blocks: tuple[Block, ...]
    proj_w1: np.ndarray
    proj_b1: np.ndarray
    proj_w2: np.ndarray
    proj_b2: np.ndarray

    def parameters(self):
        yield self.lift_w
        yield self.lift_b
        for b in self.blocks:
            yield b.pointwise
            yield b.bias
            yield b.spectral
        yield from (self.proj_w1, self.proj_b1, self.proj_w2, self.proj_b2)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def _rng(seed: int, *tag: int) -> np.random.Generator:
    return np.random.default_rng([seed, *tag])


def _cap_spectral_norm(m: np.ndarray) -> np.ndarray:
    s = np.linalg.norm(m, 2)
    return m * (SPECTRAL_NORM_CAP / s) if s > SPECTRAL_NORM_CAP else m


def build_stack(spec: StackSpec, ndim: int = 2) -> Stack:
    """Draw frozen parameters from ``spec.seed``.

    Every block has its own RNG stream keyed by its index, so a deeper stack
    with the same seed shares its leading blocks, lift and projection with a
    shallower one.
    """
    C = spec.width
    cin = spec.in_channels + (ndim if spec.coord_channels else 0)
    r = _rng(spec.seed, 0)
    lift_w = r.standard_normal((C, cin)) / np.sqrt(cin)
    lift_b = 0.1 * r.standard_normal(C)
    blocks = []
    for layer in range(1, spec.depth + 1):
        r = _rng(spec.seed, 1, layer)
        pw = r.standard_normal((C, C)) / np.sqrt(C)
        b = 0.1 * r.standard_normal(C)
        raw = r.standard_normal((spec.modes,) * ndim + (C, C)) / np.sqrt(C)
        flat = raw.reshape(-1, C, C)
        spectral = np.stack([_cap_spectral_norm(m) for m in flat]).reshape(raw.shape)
        blocks.append(Block(pw, b, spectral))
    r = _rng(spec.seed, 2)
    w1 = r.standard_normal((spec.hidden, C)) / np.sqrt(C)
    b1 = 0.1 * r.standard_normal(spec.hidden)
    w2 = r.standard_normal((1, spec.hidden)) / np.sqrt(spec.hidden)
    b2 = 0.1 * r.standard_normal(1)
    return Stack(spec, lift_w, lift_b, tuple(blocks), w1, b1, w2, b2)


def _pointwise(w: np.ndarray, b: np.ndarray, z: np.ndarray) -> np.ndarray:
    out = np.einsum("oc,bc...->bo...", w, z, optimize=False)
    return out + b.reshape((1, -1) + (1,) * (z.ndim - 2))


def cosine_basis(grid: GridSpec, modes: int) -> list[np.ndarray]:
    """Per-axis ``cos(k pi x)`` evaluated at the nodes, shape (modes, n)."""
    for ax in grid.axes:
        if modes > max(ax.n // 2, 1):
            raise ValueError(f"modes={modes} too large for an axis with {ax.n} nodes")
    k = np.arange(modes)
    return [np.cos(np.pi * k[:, None] * ax.coords[None, :]) for ax in grid.axes]


def spectral_mix(z: np.ndarray, grid: GridSpec, spectral: np.ndarray) -> np.ndarray:
    """Project on cosine modes, mix channels per mode, reconstruct.

    The weighted mean carries the zero mode, so spatially constant inputs map
    to spatially constant outputs exactly.
    """
    modes = spectral.shape[0]
    basis = cosine_basis(grid, modes)
    w = weight_field(grid).weights
    total = w.sum()
    axes = tuple(range(2, z.ndim))
    mean = (z * w).sum(axis=axes, keepdims=True) / total
    fluct = (z - mean) * w
    coef = fluct
    letters = "ijk"[: grid.ndim]
    for d, phi in enumerate(basis):
        src = "bc" + letters
        dst = list(letters)
        dst[d] = "pqr"[d]
        coef = np.einsum(f"{'pqr'[d]}{letters[d]},{src}->bc{''.join(dst)}", phi, coef, optimize=False)
    # coef now indexed by mode multi-index; continuum norms of cos(k pi x) are 1/2 for k > 0
    norms = np.ones((modes,) * grid.ndim)
    for d in range(grid.ndim):
        shape = [1] * grid.ndim
        shape[d] = modes
        norms = norms * np.where(np.arange(modes) == 0, 1.0, 0.5).reshape(shape)
    coef = coef / (norms * total)
    zero = (0,) * grid.ndim
    coef[(slice(None), slice(None)) + zero] = mean.reshape(z.shape[:2])
    mode_letters = "pqr"[: grid.ndim]
    mixed = np.einsum(f"{mode_letters}oc,bc{mode_letters}->bo{mode_letters}", spectral, coef, optimize=False)
    out = mixed
    for d, phi in enumerate(basis):
        cur = list(letters[:d]) + list(mode_letters[d:])
        nxt = list(letters[: d + 1]) + list(mode_letters[d + 1 :])
        out = np.einsum(f"{mode_letters[d]}{letters[d]},bo{''.join(cur)}->bo{''.join(nxt)}", phi, out, optimize=False)
    return out


def _norm_spec_for(stack: Stack) -> NormSpec:
    return stack.spec.norm


def forward(stack: Stack, x: FieldTensor, *, trace: bool = False):
    """Run the stack; with ``trace=True`` also return every intermediate feature map."""
    spec = stack.spec
    grid = x.grid
    cosine_basis(grid, spec.modes)
    if x.channels != spec.in_channels:
        raise ValueError(f"stack expects {spec.in_channels} input channels, got {x.channels}")
    act = _ACT[spec.activation]
    feats = [x.data]
    if spec.coord_channels:
        coords = np.stack(grid.mesh())[None].repeat(x.batch, axis=0)
        feats.append(coords)
    z = _pointwise(stack.lift_w, stack.lift_b, np.concatenate(feats, axis=1))
    inter = [z]
    for block in stack.blocks:
        t = _pointwise(block.pointwise, block.bias, z) + spectral_mix(z, grid, block.spectral)
        f = act(apply_norm(FieldTensor(t, grid), spec.norm).data)
        if spec.residual_gain is not None:
            a0, eps = spec.residual_gain
            f = residual_gain(FieldTensor(z, grid), FieldTensor(f, grid), a0, eps).data
        z = f
        inter.append(z)
    hid = act(_pointwise(stack.proj_w1, stack.proj_b1, z))
    out = _pointwise(stack.proj_w2, stack.proj_b2, hid)
    inter.append(out)
    y = FieldTensor(out, grid)
    if trace:
        return y, [FieldTensor(a, grid) for a in inter]
    return y


@dataclass
class TransferReport:
    h: float
    h_prime: float
    discrepancy: float
    per_layer: list[float]


def transfer_discrepancy(
    stack: Stack, field_id: str, h_grid: GridSpec, hp_grid: GridSpec, method: str = "bicubic"
) -> TransferReport:
    """``|| G_h(x_h) - P_{h'->h} G_{h'}(x_{h'}) ||`` on the h-grid, plus the same gap after every stage."""
    xh = sample_field(field_id, h_grid, stack.spec.in_channels)
    xhp = sample_field(field_id, hp_grid, stack.spec.in_channels)
    _, th = forward(stack, xh, trace=True)
    _, thp = forward(stack, xhp, trace=True)
    w = weight_field(h_grid)
    per_layer = []
    for a, b in zip(th, thp):
        pb = interpolate(b, h_grid, method)
        per_layer.append(comparison_norm(a.with_data(a.data - pb.data), w))
    return TransferReport(h_grid.h, hp_grid.h, per_layer[-1], per_layer)


def _with_norm(spec: StackSpec, norm: NormSpec) -> StackSpec:
    return replace(spec, norm=norm)


def _fit(xs, ys):
    pts = [(x, y) for x, y in zip(xs, ys) if y > 0 and x > 0]
    if len(pts) < 2:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(np.log([p[0] for p in pts]), np.log([p[1] for p in pts]), 1)
    return float(slope), float(np.exp(icpt))


@dataclass
class ScalingReport:
    kind: str
    rows: list[dict]
    fits: dict[str, tuple[float, float]]

    def curve(self, method: str, key: str) -> list[tuple[float, float]]:
        return [(r[key], r["discrepancy"]) for r in self.rows if r["method"] == method]


DEFAULT_NORMS = (NormSpec("none"), NormSpec("layernorm"), NormSpec("quadnorm"), NormSpec("blendquadnorm"))


def gap_scaling_experiment(
    spec: StackSpec,
    field_id: str,
    source_n: int,
    target_ns,
    norms=DEFAULT_NORMS,
    method: str = "bicubic",
) -> ScalingReport:
    """Discrepancy between the source-resolution output and each finer target, against the ratio r."""
    src = uniform_grid([source_n] * 2)
    jobs = [(norm, n) for norm in norms for n in target_ns]
    for _, n in jobs:
        if (n - 1) % (source_n - 1):
            raise ValueError(f"target n={n} does not refine source n={source_n}")
    stacks = {norm.label: build_stack(_with_norm(spec, norm)) for norm in norms}

    def run(job):
        norm, n = job
        rep = transfer_discrepancy(stacks[norm.label], field_id, src, uniform_grid([n] * 2), method)
        r = (n - 1) // (source_n - 1)
        return {
            "method": norm.label,
            "L": spec.depth,
            "r": r,
            "h": rep.h,
            "h_prime": rep.h_prime,
            "discrepancy": rep.discrepancy,
        }

    rows = pmap(run, jobs)
    fits = {}
    for norm in norms:
        pts = [(r["r"], r["discrepancy"]) for r in rows if r["method"] == norm.label and r["r"] > 1]
        fits[norm.label] = _fit([p[0] for p in pts], [p[1] for p in pts])
    return ScalingReport("gap", rows, fits)


def depth_scaling_experiment(
    spec: StackSpec,
    depths,
    field_id: str,
    n: int,
    n_prime: int,
    norms=DEFAULT_NORMS,
    method: str = "bicubic",
) -> ScalingReport:
    """Discrepancy at a fixed resolution pair as a function of depth L."""
    if any(d < 1 for d in depths):
        raise ValueError("depths must be >= 1")
    g, gp = uniform_grid([n] * 2), uniform_grid([n_prime] * 2)
    jobs = [(norm, d) for norm in norms for d in depths]

    def run(job):
        norm, d = job
        stack = build_stack(replace(spec, norm=norm, depth=d))
        rep = transfer_discrepancy(stack, field_id, g, gp, method)
        return {
            "method": norm.label,
            "L": d,
            "r": (n_prime - 1) / (n - 1),
            "h": rep.h,
            "h_prime": rep.h_prime,
            "discrepancy": rep.discrepancy,
        }

    rows = pmap(run, jobs)
    fits = {}
    for norm in norms:
        pts = [(r["L"], r["discrepancy"]) for r in rows if r["method"] == norm.label]
        fits[norm.label] = _fit([p[0] for p in pts], [p[1] for p in pts])
    return ScalingReport("depth", rows, fits)


def transfer_ladder(
    spec: StackSpec, field_id: str, ns, method: str = "bicubic"
) -> ScalingReport:
    """Discrepancy between each ``n`` and its halved-spacing partner ``2(n-1)+1``.

    The fitted slope against ``h`` is the empirical transfer order of the stack.
    """
    stack = build_stack(spec)

    def run(n):
        rep = transfer_discrepancy(stack, field_id, uniform_grid([n] * 2), uniform_grid([2 * (n - 1) + 1] * 2), method)
        return {"method": spec.norm.label, "L": spec.depth, "n": n, "h": rep.h, "h_prime": rep.h_prime, "discrepancy": rep.discrepancy}

    rows = pmap(run, list(ns))
    fits = {spec.norm.label: _fit([r["h"] for r in rows], [r["discrepancy"] for r in rows])}
    return ScalingReport("ladder", rows, fits)
