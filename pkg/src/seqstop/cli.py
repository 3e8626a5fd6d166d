"""Command-line front end: every command emits one table as JSON or CSV.

Exit status is 0 on success, 1 on a numerical or domain failure and 2 on
bad usage.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import analysis, estimators, model, montecarlo
from .errors import DomainError, SolverError

SEED_ENV = "SEQSTOP_SEED"


@dataclass
class OutputRecord:
    command: str
    parameters: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def columns(self):
        cols = []
        for row in self.rows:
            for key in row:
                if key not in cols:
                    cols.append(key)
        return cols


def format_number(x):
    """17 significant digits; non-finite values as the strings inf, -inf, nan."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _json_value(v):
    if v is None:
        return "null"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        return "{" + ", ".join(json.dumps(str(k)) + ": " + _json_value(x) for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_value(x) for x in v) + "]"
    text = format_number(v)
    if text in ("inf", "-inf", "nan"):
        return json.dumps(text)
    return text


def to_json(record):
    body = {"command": record.command, "parameters": record.parameters, "rows": record.rows}
    return _json_value(body) + "\n"


def to_csv(record):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = record.columns()
    writer.writerow(cols)
    for row in record.rows:
        writer.writerow([format_number(row[c]) if c in row else "" for c in cols])
    return buf.getvalue()


def _emit(record, args):
    text = to_csv(record) if args.format == "csv" else to_json(record)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers: %r" % text)


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list of integers: %r" % text)


def _logistic(scale):
    def psi(z):
        return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float) / scale))
    return psi


def _rule(args):
    if args.rule == "indicator":
        return model.StoppingRule.indicator(args.gamma)
    if args.scale <= 0:
        raise _Usage("--scale must be positive")
    return model.StoppingRule.smooth(_logistic(args.scale), args.gamma)


class _Usage(Exception):
    pass


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise _Usage("%s must be an integer" % SEED_ENV)


def cmd_simulate(args):
    if args.n < 1:
        raise _Usage("--n must be at least 1")
    if args.reps < 1:
        raise _Usage("--reps must be at least 1")
    if args.sigma <= 0:
        raise _Usage("--sigma must be positive")
    if args.workers < 1:
        raise _Usage("--workers must be at least 1")
    seed = _seed(args)
    try:
        spec = montecarlo.McSpec(
            model.TrialConfig(args.n, args.mu, args.sigma, _rule(args)),
            args.reps, seed, tuple(args.thresholds),
        )
    except ValueError as exc:
        raise _Usage(str(exc))
    s = montecarlo.run_mc(spec, workers=args.workers)
    base = {
        "reps": s.reps,
        "stage_one_freq": s.stage_one_freq,
        "marginal_mae": s.marginal_mae,
        "marginal_mae_se": s.marginal_mae_se,
        "degenerate_count": s.degenerate_count,
    }
    rows = [
        dict(base, threshold=t.threshold, conditional_truncated_mae=t.value,
             conditional_truncated_mae_se=t.se)
        for t in s.conditional_truncated_mae
    ] or [dict(base, threshold=math.nan, conditional_truncated_mae=math.nan,
               conditional_truncated_mae_se=math.nan)]
    # worker count is deliberately left out: output must not depend on it
    params = {"n": args.n, "mu": args.mu, "sigma": args.sigma, "reps": args.reps, "seed": seed,
              "rule": args.rule, "gamma": args.gamma, "thresholds": list(spec.thresholds)}
    if args.rule != "indicator":
        params["scale"] = args.scale
    return OutputRecord("simulate", params, rows)


def cmd_mae(args):
    if not args.n or any(v < 1 for v in args.n):
        raise _Usage("--n values must be positive integers")
    rows = []
    for n in args.n:
        r = analysis.marginal_mae(n)
        rows.append({"n": n, "mae": r.mae, "stage_one": r.decomposition[0],
                     "stage_two": r.decomposition[1]})
    return OutputRecord("mae", {"n": list(args.n)}, rows)


def cmd_divergence(args):
    if args.n < 1:
        raise _Usage("--n must be at least 1")
    levels = args.levels
    if not levels or any(v <= 0 for v in levels) or any(b <= a for a, b in zip(levels[:-1], levels[1:])):
        raise _Usage("--levels must be positive and strictly increasing")
    curve = analysis.divergence_curve(args.n, levels, workers=max(1, args.workers))
    rows = [{"N": r.N, "bound": r.bound, "quadrature": r.quadrature} for r in curve]
    params = {"n": args.n, "levels": list(levels), "fit": bool(args.fit)}
    if args.fit:
        if len(levels) < 2:
            raise _Usage("--fit needs at least two levels")
        # trailing row: N = nan marks slopes against log N
        rows.append({
            "N": math.nan,
            "bound": analysis.fit_log_slope(levels, [r.bound for r in curve]),
            "quadrature": analysis.fit_log_slope(levels, [r.quadrature for r in curve]),
        })
    return OutputRecord("divergence", params, rows)


def cmd_estimate(args):
    if args.n < 1:
        raise _Usage("--n must be at least 1")
    rule = _rule(args)
    stage = model.Stage(args.stage)
    kinterim = args.kinterim
    if stage is model.Stage.ONE:
        if kinterim is not None and kinterim != args.ksum:
            raise _Usage("at stage 1 --kinterim must equal --ksum")
        kinterim = args.ksum
    elif kinterim is None:
        if not rule.is_indicator:
            raise _Usage("--kinterim is required for stage 2 with a smooth rule")
        kinterim = -1.0  # the indicator rule only looks at its sign
    if rule.is_indicator:
        if stage is model.Stage.ONE and args.ksum < 0:
            raise DomainError("ksum < 0 at stage 1 is inconsistent with stopping rule")
        if stage is model.Stage.TWO and kinterim >= 0:
            raise DomainError("kinterim >= 0 at stage 2 is inconsistent with stopping rule")
    outcome = model.TrialOutcome(stage, args.n, kinterim, args.ksum)
    marginal = estimators.marginal_mle(outcome)
    if rule.is_indicator:
        cond = estimators.conditional_mle(outcome)
    else:
        cond = estimators.conditional_mle_generic(outcome, rule)
    params = {"stage": args.stage, "n": args.n, "ksum": args.ksum, "rule": args.rule,
              "method": cond.method.value}
    if args.kinterim is not None:
        params["kinterim"] = args.kinterim
    rows = [{"marginal": marginal.value, "conditional": cond.value,
             "iterations": cond.iterations, "residual": cond.residual}]
    return OutputRecord("estimate", params, rows)


def cmd_density(args):
    if args.n < 1:
        raise _Usage("--n must be at least 1")
    if args.points < 2:
        raise _Usage("--points must be at least 2")
    half = 4.0 * math.sqrt(2 * args.n)
    kmin = -half if args.kmin is None else args.kmin
    kmax = half if args.kmax is None else args.kmax
    if not kmin < kmax:
        raise _Usage("--kmin must be below --kmax")
    ks = np.linspace(kmin, kmax, args.points)
    one = model.joint_density(args.n, model.Stage.ONE, ks, args.mu)
    two = model.joint_density(args.n, model.Stage.TWO, ks, args.mu)
    rows = [{"k": float(k), "stage_one": float(a), "stage_two": float(b)} for k, a, b in zip(ks, one, two)]
    params = {"n": args.n, "mu": args.mu, "kmin": kmin, "kmax": kmax, "points": args.points}
    return OutputRecord("density", params, rows)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="write to this file instead of stdout")
    common.add_argument("--seed", type=int, help="random seed (default: $%s or 0)" % SEED_ENV)

    rule = argparse.ArgumentParser(add_help=False)
    rule.add_argument("--rule", choices=("indicator", "logistic"), default="indicator")
    rule.add_argument("--gamma", type=float, default=model.POCOCK_GAMMA,
                      help="boundary shape: 0.5 Pocock, 0 O'Brien-Fleming")
    rule.add_argument("--scale", type=float, default=1.0, help="logistic rule scale")

    p = argparse.ArgumentParser(prog="seqstop", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common, rule], help="Monte Carlo MAE summary")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--mu", type=float, default=0.0)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--reps", type=int, required=True)
    s.add_argument("--thresholds", type=_float_list, default=[10.0, 100.0, 1000.0, 10000.0])
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("mae", parents=[common], help="closed-form marginal MAE")
    m.add_argument("--n", type=_int_list, required=True)
    m.set_defaults(func=cmd_mae)

    d = sub.add_parser("divergence", parents=[common], help="truncated lower bound vs quadrature")
    d.add_argument("--n", type=int, default=1)
    d.add_argument("--levels", type=_float_list, default=[2.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0])
    d.add_argument("--fit", action="store_true", help="append slope against log N")
    d.add_argument("--workers", type=int, default=1)
    d.set_defaults(func=cmd_divergence)

    e = sub.add_parser("estimate", parents=[common, rule], help="marginal and conditional MLE")
    e.add_argument("--stage", type=int, choices=(1, 2), required=True)
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--ksum", type=float, required=True, help="final sum K_N")
    e.add_argument("--kinterim", type=float, help="interim sum K_n (stage 2)")
    e.set_defaults(func=cmd_estimate)

    g = sub.add_parser("density", parents=[common], help="tabulate the joint density")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--mu", type=float, default=0.0)
    g.add_argument("--kmin", type=float)
    g.add_argument("--kmax", type=float)
    g.add_argument("--points", type=int, default=101)
    g.set_defaults(func=cmd_density)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        record = args.func(args)
    except _Usage as exc:
        parser.error(str(exc))
    except (DomainError, SolverError, NotImplementedError) as exc:
        print("seqstop: error: %s" % exc, file=sys.stderr)
        return 1
    _emit(record, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
