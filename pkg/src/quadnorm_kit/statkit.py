"""Paired-seed statistics: bootstrap CIs, TOST, Holm-Bonferroni, Cohen's d, paired t-tests.

The Student t distribution is evaluated through a continued-fraction
regularized incomplete beta function, so nothing here needs a statistics
package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .parallel import pmap

_BOOT_CHUNK = 1000


@dataclass(frozen=True, eq=False)
class PairedSamples:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).ravel()
        b = np.asarray(self.b, dtype=np.float64).ravel()
        if a.shape != b.shape:
            raise ValueError("paired samples must have equal length")
        if a.size < 2:
            raise ValueError("need at least 2 pairs")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def diff(self) -> np.ndarray:
        return self.b - self.a


# ---------------------------------------------------------------------------
# t distribution


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    lbt = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """Upper tail ``P(T > t)`` of Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    x = df / (df + t * t)
    tail = 0.5 * betainc_reg(df / 2.0, 0.5, x)
    return tail if t >= 0 else 1.0 - tail


def t_ppf(q: float, df: float) -> float:
    """Quantile of Student's t by bisection on :func:`t_sf`."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    lo, hi = -1.0, 1.0
    while 1.0 - t_sf(lo, df) > q:
        lo *= 2
    while 1.0 - t_sf(hi, df) < q:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 1.0 - t_sf(mid, df) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# tests


def paired_t_test(s: PairedSamples) -> tuple[float, float]:
    """Paired t statistic for ``b - a`` and its two-sided p-value.

    Zero-variance differences short-circuit: all-zero gives ``(0, 1)``,
    a constant nonzero shift gives ``(+-inf, 0)``.
    """
    d = s.diff
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(s.n))
    return float(t), float(min(1.0, 2.0 * t_sf(abs(t), s.n - 1)))


@dataclass
class TostResult:
    p_value: float
    equivalent: bool
    mean_diff: float
    ci90: tuple[float, float]
    p_lower: float
    p_upper: float


def tost_equivalence(s: PairedSamples, margin: float, alpha: float = 0.05) -> TostResult:
    """Two one-sided paired t-tests of ``b - a`` against ``+-margin``."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    d = s.diff
    n = s.n
    mean = float(d.mean())
    se = float(d.std(ddof=1)) / math.sqrt(n)
    if se == 0.0:
        inside = abs(mean) < margin
        p = 0.0 if inside else 1.0
        return TostResult(p, inside, mean, (mean, mean), p, p)
    df = n - 1
    p_lower = t_sf((mean + margin) / se, df)  # H0: diff <= -margin
    p_upper = t_sf((margin - mean) / se, df)  # H0: diff >= +margin
    p = max(p_lower, p_upper)
    q = t_ppf(1.0 - alpha, df)
    return TostResult(p, p < alpha, mean, (mean - q * se, mean + q * se), p_lower, p_upper)


def holm_bonferroni(p_values, alpha: float = 0.05) -> list[bool]:
    """Step-down Holm rejections, returned in the input order."""
    p = np.asarray(p_values, dtype=np.float64).ravel()
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    reject = np.zeros(m, dtype=bool)
    for rank, idx in enumerate(order):
        if p[idx] < alpha / (m - rank):
            reject[idx] = True
        else:
            break
    return reject.tolist()


@dataclass
class EffectSize:
    d: float
    degenerate: bool


def cohens_d(s: PairedSamples) -> EffectSize:
    """``(mean(a) - mean(b)) / pooled sd`` with unbiased per-group variances."""
    pooled = math.sqrt((s.a.var(ddof=1) + s.b.var(ddof=1)) / 2.0)
    diff = float(s.a.mean() - s.b.mean())
    if pooled == 0.0:
        d = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return EffectSize(d, True)
    return EffectSize(diff / pooled, False)


@dataclass
class BootstrapCI:
    improvement: float
    lo: float
    hi: float
    resamples: int
    confidence: float
    method: str = "percentile"


def _improvement(a_means: np.ndarray, b_means: np.ndarray) -> np.ndarray:
    return 1.0 - b_means / a_means


def bootstrap_improvement_ci(
    s: PairedSamples, resamples: int = 10_000, confidence: float = 0.95, rng_seed: int = 0
) -> BootstrapCI:
    """Percentile CI of ``1 - mean(b)/mean(a)`` under paired resampling of seeds.

    Resamples are drawn in fixed chunks with one RNG stream per chunk, so the
    result does not depend on how many threads evaluate them.
    """
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    if s.a.mean() <= 0:
        raise ValueError("baseline mean must be positive")
    point = float(_improvement(np.array(s.a.mean()), np.array(s.b.mean())))
    chunks = [(k, min(_BOOT_CHUNK, resamples - k * _BOOT_CHUNK)) for k in range(-(-resamples // _BOOT_CHUNK))]
    children = np.random.SeedSequence(rng_seed).spawn(len(chunks))

    def chunk(job):
        k, size = job
        rng = np.random.default_rng(children[k])
        idx = rng.integers(0, s.n, size=(size, s.n))
        return _improvement(s.a[idx].mean(axis=1), s.b[idx].mean(axis=1))

    stats = np.concatenate(pmap(chunk, chunks))
    tail = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(stats, [tail, 1.0 - tail])
    return BootstrapCI(point, float(lo), float(hi), resamples, confidence)
