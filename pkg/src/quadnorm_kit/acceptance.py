"""The acceptance battery: eleven property checks run at fixed tolerances.

Every criterion returns a :class:`CriterionResult` whose ``table`` holds the
measured numbers. Tables contain no timings, so their CSV rendering is
byte-stable across runs and thread counts (criterion 11 checks exactly that).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import fieldio
from .consistency import (
    first_order_identity,
    output_ladder,
    periodic_collapse_check,
    statistic_ladder,
)
from .grid import (
    FieldTensor,
    GridSpec,
    nonuniform_axis,
    periodic_axis,
    periodic_grid,
    uniform_axis,
    uniform_grid,
)
from .meshbias import bias_convergence, bias_report, mesh_grid
from .normalize import NormSpec, apply_norm
from .opsim import StackSpec, depth_scaling_experiment, gap_scaling_experiment, transfer_ladder
from .parallel import thread_count, threads
from .quadrature import CompatibilityError, weight_field
from .stats import ReductionPattern, blend_moments, uniform_moments, weighted_moments
from .statkit import PairedSamples, bootstrap_improvement_ci, holm_bonferroni, tost_equivalence


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    table: list[dict] = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1000 + tag])


# ---------------------------------------------------------------------------
# 1. mass + polynomial exactness


def _random_axis(rng):
    kind = rng.integers(0, 5)
    n = int(rng.integers(3, 40))
    if kind == 0:
        return uniform_axis(n)
    if kind == 1:
        return periodic_axis(n)
    if kind == 2:
        return nonuniform_axis("boundary_refined", n, strength=float(rng.uniform(0.5, 4.0)))
    if kind == 3:
        return nonuniform_axis("chebyshev", n)
    inner = np.sort(rng.uniform(0.0, 1.0, n - 2))
    return nonuniform_axis("custom", coords=np.concatenate([[0.0], inner, [1.0]]))


# rule -> (polynomial degree it integrates exactly, panel width in cells)
_EXACT_DEGREE = {"trapezoid": (1, 1), "simpson": (3, 2), "boole": (5, 4)}


def _poly_mean_error(rng, rule, n_per_axis, degree):
    grid = uniform_grid(n_per_axis)
    w = weight_field(grid, rule).weights
    values = np.ones(grid.shape)
    exact = 1.0
    for x in grid.mesh():
        c = rng.normal(size=degree + 1)
        values = values * np.polynomial.polynomial.polyval(x, c)
        exact *= float(np.sum(c / np.arange(1, degree + 2)))
    est = float((values * w).sum() / w.sum())
    return abs(est - exact)


def criterion_mass_exactness(seed: int):
    rng = _rng(seed, 1)
    rows = []
    worst_mass = 0.0
    for k in range(50):
        ndim = int(rng.integers(1, 4))
        grid = GridSpec(tuple(_random_axis(rng) for _ in range(ndim)))
        rules = [None]
        if all(kd == "uniform_endpoint" for kd in grid.kinds):
            rules += ["trapezoid", "simpson", "boole", "control_volume", "uniform"]
        for rule in rules:
            try:
                w = weight_field(grid, rule)
            except CompatibilityError:
                continue
            err = abs(w.total - grid.domain_measure)
            worst_mass = max(worst_mass, err)
            rows.append({"check": "mass", "case": k, "grid": grid.describe(), "rule": w.rule, "error": err})
    worst_poly = 0.0
    for rule, (degree, panel) in _EXACT_DEGREE.items():
        for k in range(10):
            ndim = int(rng.integers(1, 3))
            ns = [panel * int(rng.integers(1, 6)) + 1 for _ in range(ndim)]
            err = _poly_mean_error(rng, rule, ns, degree)
            worst_poly = max(worst_poly, err)
            rows.append({"check": f"degree{degree}", "case": k, "grid": "x".join(map(str, ns)), "rule": rule, "error": err})
    ok = worst_mass <= 1e-12 and worst_poly <= 1e-12
    return ok, f"max mass error {worst_mass:.2e}, max polynomial error {worst_poly:.2e} (tol 1e-12)", rows


# ---------------------------------------------------------------------------
# 2. first-order identity


def _random_smooth(rng, m):
    x = np.linspace(0.0, 1.0, m)
    a, b, c = rng.normal(size=3)
    k = rng.uniform(0.5, 4.0)
    return a * np.sin(k * np.pi * x + b) + c * x**2 + rng.normal() * np.exp(-x)


def criterion_identity(seed: int):
    rng = _rng(seed, 2)
    rows = []
    worst = 0.0
    for k in range(100):
        m = int(rng.integers(3, 66))
        lhs, rhs = first_order_identity(_random_smooth(rng, m))
        worst = max(worst, abs(lhs - rhs))
        rows.append({"case": k, "m": m, "lhs": lhs, "rhs": rhs, "gap": abs(lhs - rhs)})
    lhs, rhs = first_order_identity(np.array([0.0, 0.25, 1.0]))
    rows.append({"case": "x^2", "m": 3, "lhs": lhs, "rhs": rhs, "gap": abs(lhs - rhs)})
    sq_ok = abs(lhs - 1 / 24) <= 1e-14 and abs(rhs - 1 / 24) <= 1e-14
    ok = worst <= 1e-14 and sq_ok
    return ok, f"max |lhs-rhs| {worst:.2e}; x^2 m=3 lhs={lhs:.7f} rhs={rhs:.7f}", rows


# ---------------------------------------------------------------------------
# 3. statistic order separation

LADDER = (17, 33, 65, 129, 257)


def criterion_order_separation(seed: int):
    rows = []
    ok = True
    parts = []
    for field_id, ndim in (("quadratic1d", 1), ("mixed2d", 2)):
        for rule, window in (("trapezoid", (1.75, 2.25)), ("uniform", (0.8, 1.2))):
            rep = statistic_ladder(field_id, LADDER, rule, ndim=ndim)
            inside = window[0] <= rep.fitted_order <= window[1]
            ok &= inside
            parts.append(f"{field_id}/{rule}={rep.fitted_order:.3f}")
            for r in rep.rows():
                rows.append({"field": field_id, **r, "fitted_order": rep.fitted_order})
    return ok, ", ".join(parts), rows


# ---------------------------------------------------------------------------
# 4. normalized-output order


def criterion_output_order(seed: int):
    rows = []
    parts = []
    ok = True
    for spec, window in ((NormSpec("quadnorm", "layer"), (1.7, 2.3)), (NormSpec("layernorm"), (0.8, 1.3))):
        rep = output_ladder("mixed2d", spec, (17, 33, 65, 129), "bicubic")
        ok &= window[0] <= rep.fitted_order <= window[1]
        parts.append(f"{spec.label}={rep.fitted_order:.3f} in {list(window)}")
        for r in rep.rows():
            rows.append({"field": "mixed2d", **r, "fitted_order": rep.fitted_order})
    return ok, ", ".join(parts), rows


# ---------------------------------------------------------------------------
# 5. periodic collapse


def criterion_periodic(seed: int):
    rng = _rng(seed, 5)
    rows = []
    worst = 0.0
    for k in range(20):
        ndim = int(rng.integers(1, 4))
        shape = [int(rng.integers(2, 12 if ndim == 3 else 24)) for _ in range(ndim)]
        grid = periodic_grid(shape)
        x = FieldTensor(rng.normal(size=(2, 4, *shape)), grid)
        stat_gap = max(periodic_collapse_check(x, ReductionPattern.parse(p)) for p in ("instance", "layer", "group:2"))
        out_gap = float(
            np.max(np.abs(apply_norm(x, NormSpec("quadnorm", "layer")).data - apply_norm(x, NormSpec("layernorm")).data))
        )
        worst = max(worst, stat_gap, out_gap)
        rows.append({"case": k, "grid": grid.describe(), "statistic_gap": stat_gap, "output_gap": out_gap})
    return worst <= 1e-14, f"max gap {worst:.2e} (tol 1e-14)", rows


# ---------------------------------------------------------------------------
# 6. blend endpoints and mixture law


def _mixture_moments(x: np.ndarray, w: np.ndarray, alpha: float):
    # brute force over the explicit per-node mixture distribution, layer pattern
    B = x.shape[0]
    flat = x.reshape(B, -1)
    C = x.shape[1]
    pw = np.broadcast_to(w, x.shape[1:]).reshape(-1) / (C * w.sum())
    pu = np.full(flat.shape[1], 1.0 / flat.shape[1])
    p = alpha * pu + (1 - alpha) * pw
    mean = flat @ p
    var = ((flat - mean[:, None]) ** 2) @ p
    return mean, var


def criterion_blend(seed: int):
    rng = _rng(seed, 6)
    rows = []
    worst_end, worst_mix = 0.0, 0.0
    for k in range(100):
        ndim = int(rng.integers(1, 3))
        shape = [int(rng.integers(3, 20)) for _ in range(ndim)]
        grid = uniform_grid(shape)
        x = FieldTensor(rng.normal(size=(2, 3, *shape)) + rng.normal(size=(1, 3) + (1,) * ndim), grid)
        alpha = float(rng.uniform())
        ln = apply_norm(x, NormSpec("layernorm")).data
        wln = apply_norm(x, NormSpec("quadnorm", "layer")).data
        b1 = apply_norm(x, NormSpec("blendquadnorm", alpha=1.0)).data
        b0 = apply_norm(x, NormSpec("blendquadnorm", alpha=0.0)).data
        end_gap = float(max(np.max(np.abs(b1 - ln)), np.max(np.abs(b0 - wln))))
        w = weight_field(grid)
        pat = ReductionPattern("layer")
        mb = blend_moments(uniform_moments(x, pat), weighted_moments(x, w, pat), alpha)
        bm, bv = _mixture_moments(x.data, w.weights, alpha)
        mix_gap = float(max(np.max(np.abs(mb.mean.ravel() - bm)), np.max(np.abs(mb.variance.ravel() - bv))))
        worst_end = max(worst_end, end_gap)
        worst_mix = max(worst_mix, mix_gap)
        rows.append({"case": k, "grid": grid.describe(), "alpha": alpha, "endpoint_gap": end_gap, "mixture_gap": mix_gap})
    ok = worst_end <= 1e-14 and worst_mix <= 1e-12
    return ok, f"endpoint gap {worst_end:.2e} (tol 1e-14), mixture gap {worst_mix:.2e} (tol 1e-12)", rows


# ---------------------------------------------------------------------------
# 7. quadrature-rule ablation


def criterion_rule_ablation(seed: int):
    rows = []
    parts = []
    ok = True
    for moment in ("mean", "variance"):
        orders = {}
        for rule in ("trapezoid", "simpson", "boole"):
            rep = statistic_ladder("exp1d", (5, 9, 17, 33, 65), rule, moment=moment, floor=1e-13)
            orders[rule] = rep.fitted_order
            for r in rep.rows():
                rows.append({"field": "exp1d", "moment": moment, **r, "fitted_order": rep.fitted_order})
        ok &= orders["simpson"] >= orders["trapezoid"] - 0.1 and orders["boole"] >= orders["trapezoid"] - 0.1
        parts.append(f"{moment}: " + "/".join(f"{orders[k]:.2f}" for k in ("trapezoid", "simpson", "boole")))
    return ok, "orders trapezoid/simpson/boole " + "; ".join(parts), rows


# ---------------------------------------------------------------------------
# 8. nonuniform mesh bias


def criterion_mesh_bias(seed: int):
    rep = bias_report("bump2d", mesh_grid("boundary_refined", 64, 2, 3.0), mesh="boundary_refined", strength=3.0)
    conv = bias_convergence("bump2d", "boundary_refined", (129, 257), 3.0)
    u_change = abs(conv[1].uniform_bias - conv[0].uniform_bias) / conv[0].uniform_bias
    w_shrink = conv[0].weighted_bias / conv[1].weighted_bias
    ok = rep.reduction_factor >= 100 and u_change < 0.10 and w_shrink >= 2.0
    rows = [r.as_row() for r in (rep, *conv)]
    detail = f"factor {rep.reduction_factor:.1f} (>=100), uniform change {u_change:.2%} (<10%), weighted shrink {w_shrink:.2f}x (>=2)"
    return ok, detail, rows


# ---------------------------------------------------------------------------
# 9. transfer scaling


def criterion_transfer(seed: int):
    base = StackSpec(depth=4, width=16, modes=6, seed=seed)
    ln, qn = NormSpec("layernorm"), NormSpec("quadnorm")
    gap = gap_scaling_experiment(base, "mixed2d", 17, (33, 65, 129, 257), norms=(ln, qn))
    by = {(r["method"], r["r"]): r["discrepancy"] for r in gap.rows}
    ok_a = all(by[("quadnorm", r)] <= by[("layernorm", r)] for r in (4, 8, 16))
    depth = depth_scaling_experiment(base, (4, 8), "mixed2d", 17, 65, norms=(ln, qn))
    dby = {(r["method"], r["L"]): r["discrepancy"] for r in depth.rows}
    ratios = {L: dby[("layernorm", L)] / dby[("quadnorm", L)] for L in (4, 8)}
    ok_b = ratios[8] >= ratios[4]
    ladder = transfer_ladder(replace_norm(base, NormSpec("none")), "mixed2d", (17, 33, 65, 129))
    order_none = ladder.fits["none"][0]
    ok_c = order_none >= 1.7
    rows = [{"experiment": "gap", **r} for r in gap.rows]
    rows += [{"experiment": "depth", **r, "ratio": ratios[r["L"]]} for r in depth.rows]
    rows += [{"experiment": "ladder", **r, "fitted_order": order_none} for r in ladder.rows]
    detail = (
        f"(a) quad<=LN at r>=4: {ok_a}; (b) LN/quad ratio L=4 {ratios[4]:.2f} -> L=8 {ratios[8]:.2f}; "
        f"(c) none order {order_none:.3f} (>=1.7)"
    )
    return ok_a and ok_b and ok_c, detail, rows


def replace_norm(spec: StackSpec, norm: NormSpec) -> StackSpec:
    return replace(spec, norm=norm)


# ---------------------------------------------------------------------------
# 10. statistics toolkit

# (p-values, Holm decisions at alpha = 0.05) worked out by hand
HOLM_CASES = (
    ([0.01, 0.04, 0.03, 0.005], [True, False, False, True]),
    ([0.001], [True]),
    ([0.06], [False]),
    ([0.02, 0.02], [True, True]),
    ([0.03, 0.02], [True, True]),
    ([0.03, 0.03], [False, False]),
    ([0.001, 0.002, 0.003, 0.004, 0.005], [True] * 5),
    ([0.5, 0.001, 0.9, 0.012, 0.02], [False, True, False, True, False]),
    ([0.04, 0.04, 0.04], [False] * 3),
    ([0.0, 1.0], [True, False]),
    ([0.01] * 10, [False] * 10),
    ([0.004] + [0.9] * 9, [True] + [False] * 9),
    ([0.2, 0.3, 0.4], [False] * 3),
    ([0.011, 0.001, 0.024], [True] * 3),
    ([0.011, 0.001, 0.026, 0.6], [True, True, False, False]),
    ([0.049], [True]),
    ([0.049, 0.049], [False, False]),
    ([1e-8, 0.3, 1e-6, 0.04, 0.0001, 0.07], [True, False, True, False, True, False]),
    ([0.013, 0.012, 0.0049, 0.018], [True] * 4),
    ([0.009, 0.0099, 0.3, 0.0101, 0.011], [True, True, False, True, True]),
)


def tost_like_samples(seed: int, n: int = 10, mean_diff: float = 0.0024, sd_diff: float = 0.00604) -> PairedSamples:
    """Paired errors (in percent) whose differences have exactly the given mean and sd."""
    rng = _rng(seed, 10)
    z = rng.normal(size=n)
    z = (z - z.mean()) / z.std(ddof=1)
    a = 2.0944 + 0.05 * rng.normal(size=n)
    return PairedSamples(a, a + mean_diff + sd_diff * z)


def bootstrap_coverage(seed: int, trials: int = 200, n: int = 10, resamples: int = 10_000):
    """Fraction of percentile CIs covering the true improvement ``1 - 8/10``."""
    rng = _rng(seed, 11)
    truth = 1.0 - 8.0 / 10.0
    hits = 0
    for t in range(trials):
        a = 10.0 + rng.normal(size=n)
        b = 8.0 + rng.normal(size=n)
        ci = bootstrap_improvement_ci(PairedSamples(a, b), resamples=resamples, rng_seed=int(rng.integers(2**31)))
        hits += ci.lo <= truth <= ci.hi
    return hits / trials


def criterion_statkit(seed: int):
    rows = []
    holm_ok = True
    for k, (p, expected) in enumerate(HOLM_CASES):
        got = holm_bonferroni(p, 0.05)
        holm_ok &= got == expected
        rows.append({"check": "holm", "case": k, "value": int(got == expected)})
    tost = tost_equivalence(tost_like_samples(seed), margin=0.5)
    tost_ok = tost.equivalent and tost.p_value < 1e-4
    rows.append({"check": "tost_p", "case": 0, "value": tost.p_value})
    rows.append({"check": "tost_mean_diff", "case": 0, "value": tost.mean_diff})
    rows.append({"check": "tost_ci90_lo", "case": 0, "value": tost.ci90[0]})
    rows.append({"check": "tost_ci90_hi", "case": 0, "value": tost.ci90[1]})
    cov = bootstrap_coverage(seed)
    rows.append({"check": "bootstrap_coverage", "case": 0, "value": cov})
    ok = holm_ok and tost_ok and cov >= 0.90
    detail = (
        f"holm {sum(r['value'] for r in rows if r['check'] == 'holm')}/20, "
        f"TOST p={tost.p_value:.2e} equivalent={tost.equivalent}, bootstrap coverage {cov:.3f} (>=0.90)"
    )
    return ok, detail, rows


# ---------------------------------------------------------------------------

CRITERIA = {
    1: ("mass and polynomial exactness", criterion_mass_exactness, 1.0),
    2: ("first-order mismatch identity", criterion_identity, None),
    3: ("statistic order separation", criterion_order_separation, 5.0),
    4: ("normalized-output order", criterion_output_order, 10.0),
    5: ("periodic collapse", criterion_periodic, None),
    6: ("blend endpoints and mixture law", criterion_blend, None),
    7: ("quadrature-rule ablation", criterion_rule_ablation, None),
    8: ("nonuniform mesh bias", criterion_mesh_bias, None),
    9: ("transfer gap/depth scaling", criterion_transfer, 60.0),
    10: ("statistics toolkit", criterion_statkit, None),
}
DETERMINISM = 11
ALL = tuple(CRITERIA) + (DETERMINISM,)


def run_criterion(number: int, seed: int = 7) -> CriterionResult:
    name, fn, budget = CRITERIA[number]
    t0 = time.perf_counter()
    ok, detail, table = fn(seed)
    dt = time.perf_counter() - t0
    if budget is not None:
        detail += f"; runtime budget {budget:g}s"
        if dt >= budget:
            ok = False
            detail += " EXCEEDED"
    return CriterionResult(number, name, bool(ok), detail, dt, table)


def table_csv(result: CriterionResult, seed: int) -> str:
    columns = []
    for row in result.table:
        columns += [c for c in row if c not in columns]
    return fieldio.csv_text(result.table, {"criterion": result.number, "seed": seed}, columns)


def determinism_check(results: list[CriterionResult], seed: int, alt_threads: int | None = None) -> CriterionResult:
    """Re-run every numbered criterion at another thread count and compare CSV bytes.

    The alternate count defaults to 8, or 1 when the current count is already above 1.
    """
    if alt_threads is None:
        alt_threads = 1 if thread_count() > 1 else 8
    t0 = time.perf_counter()
    rows = []
    same = True
    with threads(alt_threads):
        for res in results:
            again = run_criterion(res.number, seed)
            eq = table_csv(again, seed) == table_csv(res, seed)
            same &= eq
            rows.append({"criterion": res.number, "identical": eq})
    dt = time.perf_counter() - t0
    detail = f"{sum(r['identical'] for r in rows)}/{len(rows)} criterion tables byte-identical at {alt_threads} threads"
    return CriterionResult(DETERMINISM, "determinism", same, detail, dt, rows)


def run_all(seed: int = 7, only=None, progress=None) -> list[CriterionResult]:
    """Run the selected criteria in order; ``progress`` is called with each result."""
    selected = sorted(set(only or ALL))
    unknown = [k for k in selected if k not in ALL]
    if unknown:
        raise ValueError(f"unknown criteria {unknown}")
    results = []
    for k in selected:
        if k == DETERMINISM:
            res = determinism_check(results or [run_criterion(j, seed) for j in (1, 2, 5, 6, 10)], seed)
        else:
            res = run_criterion(k, seed)
        results.append(res)
        if progress:
            progress(res)
    return results
