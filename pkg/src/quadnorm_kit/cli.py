"""``qnk`` command-line entry point.

Every command writes a table (CSV by default, JSON with ``--format json``)
whose first line records the fully resolved configuration. Passing such an
output file back through ``--config`` re-runs the same command with the same
parameters. Exit codes: 0 success, 1 acceptance failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import acceptance, fieldio
from .consistency import output_ladder, statistic_ladder
from .grid import FIELDS, FieldTensor, GridSpec, nonuniform_axis, periodic_grid, sample_field, uniform_grid
from .meshbias import bias_sweep
from .normalize import METHODS, NormSpec, apply_norm
from .opsim import StackSpec, depth_scaling_experiment, gap_scaling_experiment
from .quadrature import RULES, weight_field
from .resample import METHODS as INTERP_METHODS
from .resample import interpolate
from .stats import ReductionPattern, uniform_moments, weighted_moments
from .statkit import (
    PairedSamples,
    bootstrap_improvement_ci,
    cohens_d,
    paired_t_test,
    tost_equivalence,
)

GRID_KINDS = ("uniform", "periodic", "boundary_refined", "chebyshev")
# argparse destinations that describe where output goes rather than what is computed
_PLUMBING = {"command", "opsim_command", "config", "output", "format", "handler"}


class UsageError(Exception):
    pass


def _require(args, *names):
    # required flags are checked here rather than by argparse so --config can supply them
    missing = ["--" + n.replace("_", "-") for n in names if getattr(args, n, None) in (None, [])]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s) {', '.join(missing)}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def make_grid(kind: str, shape, strength: float = 3.0) -> GridSpec:
    if kind == "uniform":
        return uniform_grid(shape)
    if kind == "periodic":
        return periodic_grid(shape)
    return GridSpec(tuple(nonuniform_axis(kind, int(n), strength=strength) for n in shape))


def _config_of(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in _PLUMBING}
    cfg["command"] = args.command + (f" {args.opsim_command}" if getattr(args, "opsim_command", None) else "")
    return cfg


def _emit(args, rows, summary=None, columns=None):
    cfg = _config_of(args)
    if args.format == "json":
        text = fieldio.json_text(rows, cfg, summary)
    else:
        text = fieldio.csv_text(rows, cfg, columns, summary)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)


def _input_field(args) -> FieldTensor:
    """Field from ``--input`` (binary file, leading dims taken as batch/channel) or an analytic ``--field``."""
    if args.input:
        data = fieldio.read_field(args.input)
        if data.ndim < 3:
            raise UsageError("field files must hold (batch, channel, *spatial) arrays")
        return FieldTensor(data, make_grid(args.grid, data.shape[2:], args.strength))
    if not args.field:
        raise UsageError("give --input FILE or --field NAME")
    _require(args, "n")
    grid = make_grid(args.grid, args.n, args.strength)
    return sample_field(args.field, grid, args.channels, batch=args.batch)


# ---------------------------------------------------------------------------
# commands


def cmd_weights(args):
    _require(args, "n")
    grid = make_grid(args.grid, args.n, args.strength)
    w = weight_field(grid, args.rule).weights
    cfg = _config_of(args)
    if args.format == "json":
        text = json.dumps({"config": cfg, "rule": weight_field(grid, args.rule).rule, "weights": w.tolist()}, sort_keys=True) + "\n"
    else:
        lines = ["# config: " + json.dumps(cfg, sort_keys=True)]
        lines += [",".join(fieldio.fmt(v) for v in row) for row in np.atleast_2d(w).reshape(-1, w.shape[-1])]
        text = "\n".join(lines) + "\n"
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)


def cmd_sample(args):
    _require(args, "field", "n", "out")
    x = sample_field(args.field, make_grid(args.grid, args.n, args.strength), args.channels, batch=args.batch)
    fieldio.write_field(args.out, x.data)
    _emit(args, [{"file": args.out, "shape": "x".join(map(str, x.data.shape))}])


def cmd_moments(args):
    x = _input_field(args)
    pattern = ReductionPattern.parse(args.pattern)
    if args.rule == "uniform":
        m = uniform_moments(x, pattern)
    else:
        m = weighted_moments(x, weight_field(x.grid, args.rule), pattern)
    mean = m.mean.reshape(x.batch, -1)
    var = m.variance.reshape(x.batch, -1)
    rows = [
        {"batch": b, "slice": s, "mean": float(mean[b, s]), "variance": float(var[b, s])}
        for b in range(mean.shape[0])
        for s in range(mean.shape[1])
    ]
    _emit(args, rows)


def _norm_spec(args) -> NormSpec:
    return NormSpec(args.method, args.mode, args.groups, args.alpha, args.epsilon, rule=args.norm_rule)


def cmd_normalize(args):
    x = _input_field(args)
    y = apply_norm(x, _norm_spec(args))
    if args.out:
        fieldio.write_field(args.out, y.data)
    rows = [
        {"batch": b, "channel": c, "min": float(y.data[b, c].min()), "max": float(y.data[b, c].max()),
         "weighted_mean": float((y.data[b, c] * weight_field(x.grid).weights).sum() / x.grid.domain_measure)}
        for b in range(y.batch)
        for c in range(y.channels)
    ]
    _emit(args, rows)


def cmd_resample(args):
    _require(args, "target_n")
    x = _input_field(args)
    target = make_grid(args.grid, args.target_n, args.strength)
    y = interpolate(x, target, args.interp)
    if args.out:
        fieldio.write_field(args.out, y.data)
    _emit(args, [{"source": x.grid.describe(), "target": target.describe(), "method": args.interp,
                  "boundary": "quadratic_extrapolation" if args.interp == "bicubic" else "none",
                  "min": float(y.data.min()), "max": float(y.data.max())}])


def cmd_consistency(args):
    _require(args, "field", "ladder")
    if args.kind == "statistic":
        ndim = args.ndim or (FIELDS[args.field].dims or (1,))[0]
        rep = statistic_ladder(
            args.field, args.ladder, args.rule, ReductionPattern.parse(args.pattern), ndim=ndim,
            pairing=args.pairing, moment=args.moment, channels=args.channels, floor=args.floor,
        )
    else:
        rep = output_ladder(args.field, _norm_spec(args), args.ladder, args.interp,
                            ndim=args.ndim or 2, pairing=args.pairing if args.pairing != "consecutive" else "half",
                            channels=args.channels)
    _emit(args, list(rep.rows()), {"fitted_order": rep.fitted_order, "rungs": len(rep.mismatches)})


def _stack_spec(args) -> StackSpec:
    return StackSpec(depth=args.depth, width=args.width, modes=args.modes, activation=args.activation, seed=args.seed)


def _norms(names):
    return tuple(NormSpec(n) for n in names)


def cmd_opsim(args):
    spec = _stack_spec(args)
    if args.opsim_command == "gap":
        rep = gap_scaling_experiment(spec, args.field, args.source_n, args.targets, _norms(args.norms), args.interp)
    else:
        rep = depth_scaling_experiment(spec, args.depths, args.field, args.n_src, args.n_prime, _norms(args.norms), args.interp)
    summary = {}
    for label, (slope, icpt) in rep.fits.items():
        summary[f"{label}_slope"] = slope
        summary[f"{label}_intercept"] = icpt
    _emit(args, rep.rows, summary)


def cmd_meshbias(args):
    reports = bias_sweep(args.field, args.family, args.strengths, args.n_nodes, args.ndim)
    _emit(args, [r.as_row() for r in reports])


def read_seed_errors(path) -> dict[int, float]:
    """Two-column ``seed,error`` CSV; a non-numeric first row is treated as a header."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise UsageError(f"{path}:{lineno}: expected 'seed,error'")
        try:
            seed, err = int(parts[0]), float(parts[1])
        except ValueError:
            if not out:
                continue  # header
            raise UsageError(f"{path}:{lineno}: cannot parse {line!r}") from None
        if seed in out:
            raise UsageError(f"{path}:{lineno}: duplicate seed {seed}")
        out[seed] = err
    return out


def cmd_stats(args):
    a, b = read_seed_errors(args.baseline), read_seed_errors(args.candidate)
    seeds = sorted(set(a) & set(b))
    if len(seeds) < 2:
        raise UsageError("need at least 2 seeds present in both files")
    s = PairedSamples([a[k] for k in seeds], [b[k] for k in seeds])
    ci = bootstrap_improvement_ci(s, args.resamples, args.confidence, args.seed)
    tost = tost_equivalence(s, args.margin, args.alpha)
    t, p = paired_t_test(s)
    d = cohens_d(s)
    rows = [
        {"section": "bootstrap", "metric": "baseline_mean", "value": float(s.a.mean())},
        {"section": "bootstrap", "metric": "candidate_mean", "value": float(s.b.mean())},
        {"section": "bootstrap", "metric": "improvement", "value": ci.improvement},
        {"section": "bootstrap", "metric": "ci_lo", "value": ci.lo},
        {"section": "bootstrap", "metric": "ci_hi", "value": ci.hi},
        {"section": "bootstrap", "metric": "confidence", "value": ci.confidence},
        {"section": "bootstrap", "metric": "resamples", "value": ci.resamples},
        {"section": "bootstrap", "metric": "ci_method", "value": ci.method},
        {"section": "tost", "metric": "mean_difference", "value": tost.mean_diff},
        {"section": "tost", "metric": "ci90_lo", "value": tost.ci90[0]},
        {"section": "tost", "metric": "ci90_hi", "value": tost.ci90[1]},
        {"section": "tost", "metric": "margin", "value": args.margin},
        {"section": "tost", "metric": "p_value", "value": tost.p_value},
        {"section": "tost", "metric": "equivalent", "value": tost.equivalent},
        {"section": "tost", "metric": "n", "value": s.n},
        {"section": "effect", "metric": "cohens_d", "value": d.d},
        {"section": "effect", "metric": "degenerate_sd", "value": d.degenerate},
        {"section": "effect", "metric": "paired_t", "value": t},
        {"section": "effect", "metric": "paired_p", "value": p},
    ]
    _emit(args, rows)


def cmd_verify_all(args):
    out_dir = Path(args.output) if args.output not in (None, "-") else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    def report(res):
        print(res.line(), flush=True)

    results = acceptance.run_all(args.seed, args.criteria, progress=report)
    if out_dir:
        for res in results:
            (out_dir / f"criterion_{res.number:02d}.csv").write_text(acceptance.table_csv(res, args.seed))
        summary = [{"criterion": r.number, "name": r.name, "passed": r.passed} for r in results]
        (out_dir / "summary.csv").write_text(fieldio.csv_text(summary, _config_of(args)))
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# parser


def _add_grid(p):
    p.add_argument("--grid", choices=GRID_KINDS, default="uniform")
    p.add_argument("--n", type=_int_list, help="nodes per axis, comma separated")
    p.add_argument("--strength", type=float, default=3.0, help="boundary_refined stretching strength")


def _add_input(p):
    _add_grid(p)
    p.add_argument("--input", help="binary field file (batch, channel, *spatial)")
    p.add_argument("--field", choices=sorted(FIELDS))
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--batch", type=int, default=1)


def _add_norm(p, default="quadnorm"):
    p.add_argument("--method", choices=METHODS, default=default)
    p.add_argument("--mode", choices=("layer", "instance", "group"), default="layer")
    p.add_argument("--groups", type=int, default=8)
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--norm-rule", dest="norm_rule", choices=RULES, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0; 7 for verify-all)")
    common.add_argument("--output", "-o", default=None, help="output path (directory for verify-all); default stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--config", default=None, help="JSON config or a previous output file to re-run")

    parser = argparse.ArgumentParser(prog="qnk", description="Quadrature-weighted normalization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weights", parents=[common], help="quadrature weights of a grid")
    _add_grid(p)
    p.add_argument("--rule", choices=RULES, default=None)
    p.set_defaults(handler=cmd_weights)

    p = sub.add_parser("sample", parents=[common], help="write an analytic field to a binary field file")
    _add_grid(p)
    p.add_argument("--field", choices=sorted(FIELDS))
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--out", required=False)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("moments", parents=[common], help="normalization statistics of a field")
    _add_input(p)
    p.add_argument("--rule", choices=RULES, default="trapezoid")
    p.add_argument("--pattern", default="layer", help="layer | instance | group:G")
    p.set_defaults(handler=cmd_moments)

    p = sub.add_parser("normalize", parents=[common], help="apply a normalization layer")
    _add_input(p)
    _add_norm(p)
    p.add_argument("--out", help="write the normalized field here")
    p.set_defaults(handler=cmd_normalize)

    p = sub.add_parser("resample", parents=[common], help="interpolate a field onto another grid")
    _add_input(p)
    p.add_argument("--target-n", dest="target_n", type=_int_list)
    p.add_argument("--interp", choices=INTERP_METHODS, default="bicubic")
    p.add_argument("--out", help="write the resampled field here")
    p.set_defaults(handler=cmd_resample)

    p = sub.add_parser("consistency", parents=[common], help="mismatch ladder and fitted order")
    p.add_argument("--field", choices=sorted(FIELDS))
    p.add_argument("--ladder", type=_int_list)
    p.add_argument("--kind", choices=("statistic", "output"), default="statistic")
    p.add_argument("--rule", choices=RULES, default="trapezoid")
    p.add_argument("--pattern", default="layer")
    p.add_argument("--moment", choices=("mean", "variance"), default="mean")
    p.add_argument("--pairing", choices=("consecutive", "half", "exact"), default="consecutive")
    p.add_argument("--ndim", type=int, default=None)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--floor", type=float, default=0.0)
    p.add_argument("--interp", choices=INTERP_METHODS, default="bicubic")
    _add_norm(p)
    p.set_defaults(handler=cmd_consistency)

    p = sub.add_parser("opsim", help="frozen operator-stack transfer experiments")
    osub = p.add_subparsers(dest="opsim_command", required=True)
    for name in ("gap", "depth"):
        q = osub.add_parser(name, parents=[common])
        q.add_argument("--field", choices=sorted(FIELDS), default="mixed2d")
        q.add_argument("--width", type=int, default=16)
        q.add_argument("--modes", type=int, default=6)
        q.add_argument("--activation", choices=("gelu", "tanh", "identity"), default="gelu")
        q.add_argument("--norms", type=lambda t: t.split(","), default=["none", "layernorm", "quadnorm", "blendquadnorm"])
        q.add_argument("--interp", choices=INTERP_METHODS, default="bicubic")
        q.set_defaults(handler=cmd_opsim)
        if name == "gap":
            q.add_argument("--depth", type=int, default=4)
            q.add_argument("--source-n", dest="source_n", type=int, default=17)
            q.add_argument("--targets", type=_int_list, default=[33, 65, 129, 257])
        else:
            q.add_argument("--depths", type=_int_list, default=[1, 2, 4, 8])
            q.add_argument("--depth", type=int, default=4, help=argparse.SUPPRESS)
            q.add_argument("--n", dest="n_src", type=int, default=17)
            q.add_argument("--n-prime", dest="n_prime", type=int, default=65)

    p = sub.add_parser("meshbias", parents=[common], help="uniform vs control-volume mean bias")
    p.add_argument("--field", choices=sorted(FIELDS), default="bump2d")
    p.add_argument("--family", choices=("boundary_refined", "chebyshev"), default="boundary_refined")
    p.add_argument("--strengths", type=_float_list, default=[0.0, 1.0, 2.0, 3.0])
    p.add_argument("--n", dest="n_nodes", type=int, default=64)
    p.add_argument("--ndim", type=int, default=2)
    p.set_defaults(handler=cmd_meshbias)

    p = sub.add_parser("stats", parents=[common], help="paired-seed statistics battery")
    p.add_argument("baseline", help="CSV of seed,error for the baseline method")
    p.add_argument("candidate", help="CSV of seed,error for the candidate method")
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--resamples", type=int, default=10_000)
    p.add_argument("--confidence", type=float, default=0.95)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("verify-all", parents=[common], help="run the acceptance suite")
    p.add_argument("--criteria", type=_int_list, default=None)
    p.set_defaults(handler=cmd_verify_all)
    return parser


def _load_config(path) -> dict:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        return doc.get("config", doc)
    config, _, _ = fieldio.read_csv_table(text)
    if not config:
        raise UsageError(f"{path}: no '# config:' line found")
    return config


def _find_subparser(parser, args):
    action = next(a for a in parser._subparsers._group_actions if isinstance(a, argparse._SubParsersAction))
    sp = action.choices[args.command]
    if args.command == "opsim":
        inner = next(a for a in sp._subparsers._group_actions if isinstance(a, argparse._SubParsersAction))
        sp = inner.choices[args.opsim_command]
    return sp


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    try:
        if args.config:
            cfg = _load_config(args.config)
            cfg.pop("command", None)
            sp = _find_subparser(parser, args)
            known = {a.dest for a in sp._actions}
            unknown = sorted(set(cfg) - known)
            if unknown:
                raise UsageError(f"config keys not understood by '{args.command}': {unknown}")
            sp.set_defaults(**cfg)
            args = parser.parse_args(argv)
        if args.seed is None:
            args.seed = 7 if args.command == "verify-all" else 0
        code = args.handler(args)
        return int(code or 0)
    except (UsageError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"qnk: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
