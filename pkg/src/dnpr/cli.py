"""Command-line front end.

Budgets are always given in bits; the lower-bound solver converts to nats
internally. Exit status: 0 success, 1 invalid input, 2 a check failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import harness, lowerbound, quantizer
from .model import PolynomialDecay, Regime, SingleSpike, ValidationError, make_config

EXIT_OK, EXIT_INVALID, EXIT_CHECK_FAILED = 0, 1, 2

BUDGET_HELP = "per-machine budget in bits (not nats)"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def parse_theta(text):
    """``spike:<i0>``, ``poly:<kappa>:<rho>[:<length>]`` or ``prior:<regime|auto>:<gamma>``."""
    parts = text.split(":")
    try:
        if parts[0] == "spike" and len(parts) == 2:
            return SingleSpike(int(parts[1]))
        if parts[0] == "poly" and len(parts) in (3, 4):
            length = int(parts[3]) if len(parts) == 4 else 100
            return PolynomialDecay(float(parts[1]), float(parts[2]), length)
        if parts[0] == "prior" and len(parts) == 3:
            regime = None if parts[1] in ("auto", "matched") else Regime(parts[1])
            return harness.MatchedPrior(float(parts[2]), regime)
    except ValueError as exc:
        raise ValidationError(f"bad theta spec {text!r}: {exc}") from None
    raise ValidationError(f"bad theta spec {text!r}")


def _add_problem(p, with_b=True):
    p.add_argument("--n", type=float, required=True, help="samples per machine (noise variance 1/n)")
    p.add_argument("--m", type=int, required=True, help="number of machines")
    if with_b:
        p.add_argument("--b", type=int, required=True, help=BUDGET_HELP)
    p.add_argument("--alpha", type=int, default=1, help="Sobolev smoothness order")
    p.add_argument("--c", type=float, default=math.pi, help="Sobolev radius (default pi)")
    p.add_argument("--c-tilde", type=float, default=None, help="ellipsoid radius (default c / pi^alpha)")


def _add_output(p):
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser():
    parser = _Parser(prog="dnpr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="Monte Carlo risk of the protocol at one config",
                       description="Monte Carlo risk at one config. Budget --b is in bits.")
    _add_problem(p)
    p.add_argument("--theta", default="prior:auto:1", help="spike:<i0> | poly:<kappa>:<rho> | prior:<regime>:<gamma>")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)

    p = sub.add_parser("sweep", help="risk along a geometric grid of one axis",
                       description="Geometric sweep. Budgets (--b, and mb/mnb axis values) are in bits.")
    p.add_argument("--axis", choices=harness.AXES, required=True)
    p.add_argument("--points", type=int, default=5)
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--n", type=float, default=None, help="samples per machine")
    p.add_argument("--m", type=int, default=None, help="number of machines")
    p.add_argument("--b", type=int, default=None, help=BUDGET_HELP)
    p.add_argument("--alpha", type=int, default=1)
    p.add_argument("--c", type=float, default=math.pi)
    p.add_argument("--c-tilde", type=float, default=None)
    p.add_argument("--theta", default="prior:auto:1")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)

    p = sub.add_parser("regime", help="fit the risk exponent of one regime",
                       description="Canonical sweep for one regime; budgets in bits. Exits 2 if the slope misses.")
    p.add_argument("--which", choices=[r.value for r in Regime], required=True)
    p.add_argument("--alpha", type=int, default=1)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--rows-out", default=None, help="also write the per-point table here")
    _add_output(p)

    p = sub.add_parser("bounds", help="lower bounds (solver and closed form)",
                       description="Lower bounds. --b is in bits; the solver works in nats internally.")
    _add_problem(p)
    p.add_argument("--gamma", type=float, default=1.0)
    _add_output(p)

    p = sub.add_parser("quantizer-check", help="empirical dithered-error law",
                       description="Checks uniform, input-independent quantization error. The index width is reported in bits. Exits 2 on failure.")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--clamp", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)

    p = sub.add_parser("experiment", help="run a JSON experiment file",
                       description="Run {format_version, command, parameters, output} from a JSON file. Budgets are in bits.")
    p.add_argument("path")
    return parser


def _config(args):
    return make_config(args.n, args.m, args.b, args.alpha, args.c, args.c_tilde)


def _emit(records, fields, args):
    text = harness.rows_to_json(records, fields) if args.format == "json" else harness.rows_to_csv(records, fields)
    if args.out is None:
        sys.stdout.write(text)
        return
    try:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ValidationError(f"cannot write {args.out}: {exc}") from None


ROW_FIELDS = harness.CSV_FIELDS + harness.PLAN_FIELDS


def cmd_estimate(args):
    config = _config(args)
    spec = parse_theta(args.theta)
    report = harness.estimate_risk(config, spec, args.trials, args.seed)
    bounds = lowerbound.bound_report(config)
    row = harness.SweepRow(0, 0, config, report, bounds.solver_value, bounds.closed_form_value,
                           harness.analytic_upper_bound(report.plan)["total"])
    _emit([row.record()], ROW_FIELDS, args)
    return EXIT_OK


def cmd_sweep(args):
    if args.points < 4:
        raise ValidationError("a sweep needs at least 4 points")
    if not (args.start > 0 and args.stop > 0):
        raise ValidationError("--from and --to must be positive")
    held = {"alpha": args.alpha, "c": args.c, "c_tilde": args.c_tilde}
    for name in ("n", "m", "b"):
        if getattr(args, name) is not None:
            held[name] = getattr(args, name)
    need = {"mb": {"n", "b"}, "mn": {"m", "b"}, "mnb": {"m", "b"}, "n": {"m", "b"},
            "m": {"n", "b"}, "b": {"n", "m"}}[args.axis]
    missing = sorted(need - held.keys())
    if missing:
        raise ValidationError(f"axis {args.axis} needs held parameters: {', '.join('--' + k for k in missing)}")
    points = tuple(float(v) for v in np.geomspace(args.start, args.stop, args.points))
    sweep = harness.SweepSpec(args.axis, points, held, parse_theta(args.theta), args.trials,
                              args.seed, args.gamma)
    rows = harness.run_sweep(sweep)
    fields = ROW_FIELDS + (["error"] if any(r.error for r in rows) else [])
    _emit([r.record() for r in rows], fields, args)
    return EXIT_OK


REGIME_FIELDS = ["regime", "alpha", "axis", "slope", "expected_exponent", "tolerance", "r_squared",
                 "pass", "messages", "max_message_bits"]


def cmd_regime(args):
    result = harness.regime_experiment(args.which, args.alpha, args.trials, args.seed, args.gamma)
    rec = {k: result[k] for k in REGIME_FIELDS if k in result}
    rec["messages"] = result["audit"].messages
    rec["max_message_bits"] = result["audit"].max_bits
    _emit([rec], REGIME_FIELDS, args)
    if args.rows_out:
        text = harness.rows_to_csv([r.record() for r in result["rows"]], ROW_FIELDS)
        try:
            with open(args.rows_out, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise ValidationError(f"cannot write {args.rows_out}: {exc}") from None
    return EXIT_OK if result["pass"] else EXIT_CHECK_FAILED


def cmd_bounds(args):
    report = lowerbound.bound_report(_config(args), args.gamma)
    _emit([report.row()], lowerbound.BOUND_FIELDS, args)
    return EXIT_OK


QUANT_FIELDS = ["delta", "clamp", "samples", "ks_pvalue", "corr", "mse_ratio", "pass"]


def cmd_quantizer_check(args):
    if args.samples < 10:
        raise ValidationError("--samples must be at least 10")
    res = quantizer.error_law_check(args.delta, args.clamp, args.samples, args.seed)
    ok = res["ks_pvalue"] > 0.01 and abs(res["corr"]) < 0.02 and abs(res["mse_ratio"] - 1) <= 0.03
    rec = dict(res, delta=args.delta, clamp=args.clamp, samples=args.samples)
    rec["pass"] = ok
    _emit([rec], QUANT_FIELDS, args)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


COMMANDS = {"estimate": cmd_estimate, "sweep": cmd_sweep, "regime": cmd_regime,
            "bounds": cmd_bounds, "quantizer-check": cmd_quantizer_check}
_EXPERIMENT_KEYS = {"format_version", "command", "parameters", "output"}


def experiment_argv(data):
    """Translate an experiment-file mapping into an argv list."""
    if not isinstance(data, dict):
        raise ValidationError("experiment file must hold a JSON object")
    unknown = set(data) - _EXPERIMENT_KEYS
    if unknown:
        raise ValidationError(f"unknown experiment keys: {sorted(unknown)}")
    if data.get("format_version") != 1:
        raise ValidationError("format_version must be 1")
    command = data.get("command")
    if command not in COMMANDS:
        raise ValidationError(f"unknown command {command!r}")
    argv = [command]
    for key, value in (data.get("parameters") or {}).items():
        argv += [f"--{key.replace('_', '-')}", str(value)]
    output = data.get("output") or {}
    unknown = set(output) - {"path", "format"}
    if unknown:
        raise ValidationError(f"unknown output keys: {sorted(unknown)}")
    if "path" in output:
        argv += ["--out", str(output["path"])]
    if "format" in output:
        argv += ["--format", str(output["format"])]
    return argv


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "experiment":
            try:
                with open(args.path) as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ValidationError(f"cannot read experiment file: {exc}") from None
            args = parser.parse_args(experiment_argv(data))
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except ValidationError as exc:
        print(f"dnpr: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
