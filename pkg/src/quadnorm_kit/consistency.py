"""Cross-resolution mismatch of statistics and normalized outputs, and order fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import FieldTensor, GridSpec, exact_mean, sample_field, uniform_grid
from .normalize import NormSpec, apply_norm, norm_moments
from .parallel import pmap
from .quadrature import WeightField, weight_field
from .resample import interpolate
from .stats import Moments, ReductionPattern, uniform_moments, weighted_moments

V_MIN = 1e-6


class DegenerateFieldError(ValueError):
    """Weighted variance below the floor required for a stable comparison."""


def comparison_norm(z: FieldTensor, w: WeightField | None = None) -> float:
    """Quadrature-weighted discrete L2 norm, channel 2-norm inside; max over the batch."""
    if w is None:
        w = weight_field(z.grid)
    weights = w.weights
    if weights.shape != z.data.shape[2:]:
        raise ValueError("weights do not match the field's spatial shape")
    sq = (z.data**2).sum(axis=1)
    per_sample = (sq * weights).reshape(z.batch, -1).sum(axis=1)
    return float(np.sqrt(per_sample.max()))


def field_moments(field_id: str, grid: GridSpec, rule: str, pattern: ReductionPattern, channels: int = 1) -> Moments:
    x = sample_field(field_id, grid, channels)
    if rule == "uniform":
        return uniform_moments(x, pattern)
    return weighted_moments(x, weight_field(grid, rule), pattern)


def statistic_mismatch(
    field_id: str,
    h_grid: GridSpec,
    hp_grid: GridSpec | None,
    rule: str = "trapezoid",
    pattern: ReductionPattern | None = None,
    *,
    moment: str = "mean",
    channels: int = 1,
) -> float:
    """``|mu_h - mu_h'|`` maxed over reduced slices.

    ``hp_grid=None`` compares against the exact continuum mean instead
    (only for ``moment="mean"`` on fields with a registered integral).
    """
    pattern = pattern or ReductionPattern("layer")
    mh = field_moments(field_id, h_grid, rule, pattern, channels)
    if hp_grid is None:
        if moment != "mean":
            raise ValueError("continuum comparison is only available for the mean")
        S, m = pattern.slices(channels)
        exact = np.array([np.mean([exact_mean(field_id, s * m + k) for k in range(m)]) for s in range(S)])
        return float(np.max(np.abs(mh.mean.reshape(-1, S) - exact)))
    mhp = field_moments(field_id, hp_grid, rule, pattern, channels)
    a, b = (mh.mean, mhp.mean) if moment == "mean" else (mh.variance, mhp.variance)
    return float(np.max(np.abs(a - b)))


def order_estimate(ladder_mismatches, floor: float = 0.0) -> float:
    """Least-squares slope of log(mismatch) against log(h).

    Rungs whose mismatch is not above ``floor`` are dropped; fewer than three
    remaining rungs is an error.
    """
    pts = [(float(h), float(v)) for h, v in ladder_mismatches if v > floor and h > 0]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 rungs with mismatch > {floor}, got {len(pts)}")
    lh = np.log([p[0] for p in pts])
    lv = np.log([p[1] for p in pts])
    slope, _ = np.polyfit(lh, lv, 1)
    return float(slope)


def _brackets(samples):
    u = np.asarray(samples, dtype=np.float64)
    m = u.size
    if m < 3:
        raise ValueError(f"need m >= 3 samples, got {m}")
    boundary = (u[0] + u[-1]) / 2
    interior = u[1:-1].mean()
    return u, m, boundary, interior


def _trapezoid_mean(u: np.ndarray) -> float:
    h = 1.0 / (u.size - 1)
    return h / 2 * (u[0] + u[-1]) + h * u[1:-1].sum()


def first_order_identity(samples) -> tuple[float, float]:
    """Both sides of ``mu_disc - mu_trap = (m-2)/(m(m-1)) (boundary avg - interior mean)``."""
    u, m, boundary, interior = _brackets(samples)
    lhs = u.mean() - _trapezoid_mean(u)
    rhs = (m - 2) / (m * (m - 1)) * (boundary - interior)
    return float(lhs), float(rhs)


def endpoint_perturbation(samples) -> tuple[float, float]:
    """Exact ``mu_trap - mu_unif`` and its leading ``h (interior - boundary)`` term."""
    u, m, boundary, interior = _brackets(samples)
    exact = (m - 2) / (m * (m - 1)) * (interior - boundary)
    leading = (interior - boundary) / (m - 1)
    return float(exact), float(leading)


def periodic_collapse_check(x: FieldTensor, pattern: ReductionPattern) -> float:
    """Largest gap between quadrature-weighted and uniform statistics on a periodic grid."""
    if any(k != "periodic" for k in x.grid.kinds):
        raise ValueError("periodic_collapse_check needs a periodic grid")
    mw = weighted_moments(x, weight_field(x.grid, "trapezoid"), pattern)
    mu = uniform_moments(x, pattern)
    return float(max(np.max(np.abs(mw.mean - mu.mean)), np.max(np.abs(mw.variance - mu.variance))))


def _check_variance(m: Moments | None, where: str):
    if m is not None and np.min(m.variance) < V_MIN:
        raise DegenerateFieldError(f"variance {np.min(m.variance):.3g} below v_min={V_MIN} on {where}")


def output_mismatch(
    field_id: str,
    spec: NormSpec,
    h_grid: GridSpec,
    hp_grid: GridSpec,
    method: str = "bicubic",
    *,
    channels: int = 2,
) -> float:
    """``|| N_h(x_h) - P_{h'->h} N_{h'}(x_{h'}) ||`` in the comparison norm on the h-grid."""
    xh = sample_field(field_id, h_grid, channels)
    xhp = sample_field(field_id, hp_grid, channels)
    _check_variance(norm_moments(xh, spec), h_grid.describe())
    _check_variance(norm_moments(xhp, spec), hp_grid.describe())
    yh = apply_norm(xh, spec)
    yhp = interpolate(apply_norm(xhp, spec), h_grid, method)
    return comparison_norm(yh.with_data(yh.data - yhp.data))


@dataclass
class ConsistencyReport:
    field_id: str
    rule: str
    pattern: str
    kind: str
    ladder: list[tuple[int, float]]
    partners: list[int]
    mismatches: list[float]
    fitted_order: float
    meta: dict = field(default_factory=dict)

    def rows(self):
        for k, ((n, h), n2, v) in enumerate(zip(self.ladder, self.partners, self.mismatches)):
            yield {"rung": k, "n": n, "n_prime": n2, "h": h, "mismatch": v, "rule": self.rule, "pattern": self.pattern}


def _grid(n: int, ndim: int) -> GridSpec:
    return uniform_grid([n] * ndim)


def _partners(ns, pairing):
    ns = list(ns)
    if pairing == "consecutive":
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("ladder must be strictly refining")
        return ns[:-1], ns[1:]
    if pairing == "half":
        return ns, [2 * (n - 1) + 1 for n in ns]
    if pairing == "exact":
        return ns, [None] * len(ns)
    raise ValueError(f"unknown pairing {pairing!r}")


def statistic_ladder(
    field_id: str,
    ns,
    rule: str,
    pattern: ReductionPattern | None = None,
    *,
    ndim: int = 1,
    pairing: str = "consecutive",
    moment: str = "mean",
    channels: int = 1,
    floor: float = 0.0,
) -> ConsistencyReport:
    """Statistic mismatch over a refinement ladder of endpoint-inclusive uniform grids."""
    pattern = pattern or ReductionPattern("layer")
    coarse, fine = _partners(ns, pairing)

    def rung(pair):
        n, n2 = pair
        hp = None if n2 is None else _grid(n2, ndim)
        return statistic_mismatch(field_id, _grid(n, ndim), hp, rule, pattern, moment=moment, channels=channels)

    values = pmap(rung, list(zip(coarse, fine)))
    ladder = [(n, 1.0 / (n - 1)) for n in coarse]
    order = order_estimate([(h, v) for (_, h), v in zip(ladder, values)], floor)
    return ConsistencyReport(field_id, rule, str(pattern), f"statistic-{moment}", ladder, [n2 or 0 for n2 in fine], values, order)


def output_ladder(
    field_id: str,
    spec: NormSpec,
    ns,
    method: str = "bicubic",
    *,
    ndim: int = 2,
    pairing: str = "half",
    channels: int = 2,
) -> ConsistencyReport:
    """Normalized-output mismatch over a ladder; the comparison runs on the coarser grid."""
    coarse, fine = _partners(ns, pairing)

    def rung(pair):
        n, n2 = pair
        return output_mismatch(field_id, spec, _grid(n, ndim), _grid(n2, ndim), method, channels=channels)

    values = pmap(rung, list(zip(coarse, fine)))
    ladder = [(n, 1.0 / (n - 1)) for n in coarse]
    order = order_estimate([(h, v) for (_, h), v in zip(ladder, values)])
    rule = "trapezoid" if spec.method in ("quadnorm", "blendquadnorm") else "uniform"
    return ConsistencyReport(
        field_id, rule, spec.label, "output", ladder, list(fine), values, order, {"interp": method}
    )
