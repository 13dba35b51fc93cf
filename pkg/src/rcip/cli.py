"""``rcip`` command-line interface.

Exit codes: 0 on success (infeasible calibrations and reports included),
2 on usage errors, 1 on runtime errors such as unreadable or malformed
input files.  Every output echoes its configuration and a format version,
and no command reads the environment or the clock.

Each subcommand accepts ``--config FILE``: a JSON object whose keys are
flag names without the leading dashes (``{"alpha-cov": 0.1}``).  Flags
given on the command line take precedence over the file.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from typing import Any, Optional, Sequence

import numpy as np

from . import io
from .baselines import BaselineParams, Method, knowno_params
from .calibration import (
    CalibrationConfig,
    HelpVariant,
    RiskKind,
    RiskSpec,
    calibrate,
    default_theta_grid,
)
from .evaluation import (
    RcipPolicy,
    evaluate,
    fit_method,
    fwer_monte_carlo,
    help_rate_curve,
    infeasible_report,
)
from .hallway import PRESETS, WorldConfig, generate_dataset
from .synthetic import GENERATORS
from .types import InvalidInputError, ParamPair

MIN_FWER_TRIALS = 100
CURVE_HEADER = ("method", "target_success", "achieved_success", "help_rate", "feasible")
STEP_METRICS_NOTE = (
    "step metrics are unconditional: steps after an empty set count as failures "
    "and every step stays in the denominator"
)


class UsageError(Exception):
    pass


# -- argument helpers ----------------------------------------------------------------

def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected an integer >= 0, got {v}")
    return v


def _unit_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {v}")
    return v


def _open_unit_float(text: str) -> float:
    v = _unit_float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v}")
    return v


def parse_theta_grid(text: str) -> tuple[float, ...]:
    """``MIN,MAX,COUNT,log`` or ``MIN,MAX,COUNT,lin``."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4 or parts[3] not in ("log", "lin"):
        raise argparse.ArgumentTypeError("theta grid must look like MIN,MAX,COUNT,log (or lin)")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad theta grid {text!r}") from None
    if not (0 < lo <= hi and math.isfinite(hi)) or n < 1:
        raise argparse.ArgumentTypeError("theta grid needs 0 < MIN <= MAX and COUNT >= 1")
    if n == 1 and lo != hi:
        raise argparse.ArgumentTypeError("a single-point theta grid needs MIN == MAX")
    if parts[3] == "log":
        return default_theta_grid(lo, hi, n)
    return tuple(np.linspace(lo, hi, n).tolist())


def parse_targets(text: str) -> list[float]:
    try:
        targets = [float(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"targets must be comma-separated numbers, got {text!r}") from None
    if any(not 0.0 < t < 1.0 for t in targets):
        raise UsageError("targets must lie in (0, 1)")
    if any(b <= a for a, b in zip(targets, targets[1:])):
        raise UsageError("targets must be strictly ascending")
    return targets


def parse_methods(text: str) -> list[Method]:
    names = [m.strip() for m in text.split(",") if m.strip()]
    valid = [m.value for m in Method]
    bad = [n for n in names if n not in valid]
    if bad or not names:
        raise UsageError(f"unknown method(s) {bad or [text]}; valid names: {','.join(valid)}")
    return [Method(n) for n in names]


def _add_calibration_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=_open_unit_float, default=0.01)
    p.add_argument("--lambda-grid", type=_positive_int, default=2000, metavar="N",
                   help="number of evenly spaced lambda values in [0, 1]")
    p.add_argument("--theta-grid", type=parse_theta_grid, default="0.001,10,5,log",
                   metavar="MIN,MAX,COUNT,log")
    p.add_argument("--chains", type=_positive_int, default=None,
                   help="number of fixed-sequence chains (default: one per theta)")
    p.add_argument("--alpha-help", type=_unit_float, default=None)
    p.add_argument("--help-variant", choices=[v.value for v in HelpVariant], default="plan")


def _calibration_config(args: argparse.Namespace, alpha_cov: float) -> CalibrationConfig:
    risks = [RiskSpec(RiskKind.MISCOVERAGE, alpha_cov)]
    if args.alpha_help is not None:
        risks.append(RiskSpec(RiskKind.HELP, args.alpha_help, args.help_variant))
    try:
        return CalibrationConfig(
            delta=args.delta,
            lambda_grid=tuple(np.linspace(0.0, 1.0, args.lambda_grid).tolist()),
            theta_grid=args.theta_grid,
            num_chains=args.chains,
            risks=tuple(risks),
        )
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None


def _config_echo(cfg: CalibrationConfig) -> dict[str, Any]:
    return {
        "delta": cfg.delta,
        "lambda_grid": {"size": len(cfg.lambda_grid), "min": cfg.lambda_grid[0], "max": cfg.lambda_grid[-1]},
        "theta_grid": list(cfg.theta_grid),
        "chains": cfg.num_chains,
        "risks": [{"kind": r.kind.value, "alpha": r.alpha, "help_variant": r.help_variant.value}
                  for r in cfg.risks],
    }


def _check_outputs(out: str, *inputs: Optional[str]) -> None:
    for src in inputs:
        if src is not None and os.path.abspath(src) == os.path.abspath(out):
            raise UsageError(f"output path {out} would overwrite an input")


# -- commands -----------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    if args.episodes < 1:
        raise UsageError("--episodes must be >= 1")
    try:
        cfg = WorldConfig.preset(args.preset, seed=args.seed, logit_scale=args.logit_scale)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    records = generate_dataset(cfg, args.episodes, args.start_index)
    io.write_dataset(args.out, records)
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    _check_outputs(args.out, args.data)
    cfg = _calibration_config(args, args.alpha_cov)
    records = io.read_dataset(args.data)
    res = calibrate(records, cfg)
    table = res.table
    valid = [
        {"lambda": float(table.lam[j]), "theta": float(table.theta[j]),
         "p_values": [float(p) for p in table.p_values[j]]}
        for j in res.valid_indices
    ]
    sel = res.selected
    selected = None
    if sel is not None:
        j = res.selected_index
        selected = {"lambda": sel.lam, "theta": sel.theta,
                    "empirical_risks": [float(r) for r in table.empirical_risks[j]],
                    "empirical_help": float(table.help_rate[j])}
    io.write_json(args.out, {
        "format_version": io.FORMAT_VERSION,
        "command": "calibrate",
        "config": {"data": args.data, **_config_echo(cfg)},
        "num_records": res.num_records,
        "feasible": res.feasible,
        "valid_size": len(valid),
        "selected": selected,
        "valid_set": valid,
    })
    return 0


_THRESHOLD_KEYS = {
    Method.KNOWNO: ("qhat", "threshold"),
    Method.SIMPLE: ("mass_target", "threshold"),
    Method.ENTROPY: ("entropy_cutoff", "threshold"),
}


def _parse_inline(text: str) -> dict[str, float]:
    out = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"inline params must look like key=value, got {part!r}")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise UsageError(f"param {key.strip()!r} is not a number: {value!r}") from None
    return out


def _load_params(args: argparse.Namespace, method: Method) -> tuple[Any, dict[str, Any]]:
    """Resolve ``--params``/``--cal`` into ``(policy or None, params echo)``."""
    if method is Method.NOHELP:
        if args.params is not None or args.cal is not None:
            raise UsageError("nohelp takes no parameters")
        return BaselineParams(Method.NOHELP, theta_fixed=args.theta_fixed), {}
    if args.cal is not None:
        if args.params is not None:
            raise UsageError("give either --params or --cal, not both")
        if args.target is None:
            raise UsageError("--cal needs --target")
        cal = io.read_dataset(args.cal)
        policy, info = fit_method(method, cal, args.target)
        return policy, {"source": "cal", "cal": args.cal, "target": args.target, **info}
    if args.params is None:
        raise UsageError(f"{method.value} needs --params (a file or key=value list) or --cal with --target")

    if os.path.exists(args.params):
        doc = io.read_json(args.params)
        if not isinstance(doc, dict):
            raise UsageError(f"{args.params} is not a parameter document")
        if doc.get("command") == "calibrate":
            if method is not Method.RCIP:
                raise UsageError(f"a calibration result can only drive rcip, not {method.value}")
            if doc.get("selected") is None:
                return None, {"source": args.params, "valid_size": 0}
            sel = doc["selected"]
            return RcipPolicy(ParamPair(float(sel["lambda"]), float(sel["theta"]))), {
                "source": args.params, "lambda": sel["lambda"], "theta": sel["theta"]}
        values = {k: v for k, v in doc.items() if k != "format_version"}
    else:
        values = _parse_inline(args.params)

    if method is Method.RCIP:
        if set(values) != {"lambda", "theta"}:
            raise UsageError(f"rcip params need exactly lambda and theta, got {sorted(values)}")
        try:
            p = ParamPair(float(values["lambda"]), float(values["theta"]))
        except (InvalidInputError, TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from None
        return RcipPolicy(p), {"source": "inline", "lambda": p.lam, "theta": p.theta}
    keys = _THRESHOLD_KEYS[method]
    found = [k for k in values if k in keys]
    extra = [k for k in values if k not in keys]
    if len(found) != 1 or extra:
        raise UsageError(f"{method.value} params need exactly one of {list(keys)}, got {sorted(values)}")
    try:
        bp = BaselineParams(method, float(values[found[0]]), args.theta_fixed)
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    echo: dict[str, Any] = {"source": "inline", keys[0]: bp.threshold, "theta": bp.theta_fixed}
    if method is Method.KNOWNO:
        echo["lambda"] = knowno_params(bp).lam
    return bp, echo


def cmd_evaluate(args: argparse.Namespace) -> int:
    method = Method(args.method)
    _check_outputs(args.out, args.data, args.cal,
                   args.params if args.params and os.path.exists(args.params) else None)
    policy, echo = _load_params(args, method)
    records = io.read_dataset(args.data)
    if policy is None:
        rep = infeasible_report(method.value, records, echo)
    else:
        rep = evaluate(records, policy, method.value, echo)
    io.write_json(args.out, {
        "format_version": io.FORMAT_VERSION,
        "command": "evaluate",
        "config": {"data": args.data, "method": method.value, "theta_fixed": args.theta_fixed},
        "params": rep.params,
        "feasible": rep.feasible,
        "status": "ok" if rep.feasible else "infeasible",
        "tallies": {
            "num_records": rep.num_records,
            "num_steps": rep.num_steps,
            "plan_successes": rep.plan_successes,
            "plan_helps": rep.plan_helps,
            "step_successes": rep.step_successes,
            "step_helps": rep.step_helps,
            "empty_sets": rep.empty_sets,
        },
        "rates": None if not rep.feasible else {
            "plan_success": rep.plan_success,
            "plan_help": rep.plan_help,
            "step_success": rep.step_success,
            "step_help": rep.step_help,
        },
        "metadata": {"step_metrics": STEP_METRICS_NOTE},
    })
    return 0


def cmd_curves(args: argparse.Namespace) -> int:
    methods = parse_methods(args.methods)
    targets = parse_targets(args.targets)
    _check_outputs(args.out, args.cal, args.test)
    cfg = _calibration_config(args, 0.15)
    cal = io.read_dataset(args.cal)
    test = io.read_dataset(args.test)
    rows = []
    for m in methods:
        for pt in help_rate_curve(cal, test, m, targets, cfg):
            rows.append((pt.method, pt.target_success, pt.achieved_success, pt.help_rate, pt.feasible))
    io.write_csv(args.out, CURVE_HEADER, rows)
    return 0


def cmd_fwer(args: argparse.Namespace) -> int:
    warnings = []
    if args.trials < MIN_FWER_TRIALS:
        warnings.append(f"only {args.trials} trials; at least {MIN_FWER_TRIALS} are needed "
                        "for the 3-standard-error bound to be meaningful")
    cfg = _calibration_config(args, args.alpha)
    gen = GENERATORS[args.generator]()
    rep = fwer_monte_carlo(gen, cfg, args.trials, args.records, args.seed)
    io.write_json(args.out, {
        "format_version": io.FORMAT_VERSION,
        "command": "fwer",
        "config": {"generator": args.generator, "seed": args.seed, "trials": args.trials,
                   "records": args.records, **_config_echo(cfg)},
        "warnings": warnings,
        "trials": rep.trials,
        "violations": rep.violations,
        "observed_fwer": rep.observed_fwer,
        "standard_error": rep.standard_error,
        "bound": rep.bound,
        "passed": rep.passed,
        "log": [{"trial": t.trial, "valid_size": t.valid_size, "violated": t.violated,
                 "worst_excess": None if math.isinf(t.worst_excess) else t.worst_excess}
                for t in rep.log],
    })
    return 0


# -- parser ---------------------------------------------------------------------------

class _CommandParser(argparse.ArgumentParser):
    """Subcommand parser that remembers its long flags (config keys are checked against them)."""

    def __init__(self, *a, **kw) -> None:
        self.flags: set[str] = set()
        super().__init__(*a, **kw)

    def add_argument(self, *names, **kw):
        self.flags.update(n for n in names if n.startswith("--"))
        return super().add_argument(*names, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcip", description="Risk-calibrated interactive planning.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_CommandParser)
    config_help = "JSON file of flag values; command-line flags take precedence"
    flags: dict[str, set[str]] = {}

    p = sub.add_parser("simulate", help="generate a scenario dataset")
    p.add_argument("--env", choices=["hallway"], default="hallway")
    p.add_argument("--episodes", type=_nonneg_int, required=True)
    p.add_argument("--seed", type=_nonneg_int, required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default="medium")
    p.add_argument("--start-index", type=_nonneg_int, default=0,
                   help="index of the first episode (disjoint ranges give independent splits)")
    p.add_argument("--logit-scale", type=_positive_float, default=1.0,
                   help="multiply predictor logits, modelling temperature misspecification")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, metavar="FILE", help=config_help)
    p.set_defaults(func=cmd_simulate)
    flags["simulate"] = p.flags

    p = sub.add_parser("calibrate", help="calibrate (lambda, theta) on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--alpha-cov", type=_unit_float, default=0.15)
    _add_calibration_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, metavar="FILE", help=config_help)
    p.set_defaults(func=cmd_calibrate)
    flags["calibrate"] = p.flags

    p = sub.add_parser("evaluate", help="roll a method out on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=[m.value for m in Method], required=True)
    p.add_argument("--params", default=None,
                   help="calibration result or parameter file, or inline key=value[,key=value]")
    p.add_argument("--cal", default=None, help="tune or calibrate the method on this dataset instead")
    p.add_argument("--target", type=_open_unit_float, default=None)
    p.add_argument("--theta-fixed", type=_positive_float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, metavar="FILE", help=config_help)
    p.set_defaults(func=cmd_evaluate)
    flags["evaluate"] = p.flags

    p = sub.add_parser("curves", help="help rate against target plan success")
    p.add_argument("--cal", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--methods", default=",".join(m.value for m in Method))
    p.add_argument("--targets", default="0.5,0.7,0.85,0.95")
    _add_calibration_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, metavar="FILE", help=config_help)
    p.set_defaults(func=cmd_curves)
    flags["curves"] = p.flags

    p = sub.add_parser("fwer", help="Monte Carlo check of the family-wise error rate")
    p.add_argument("--trials", type=_positive_int, required=True)
    p.add_argument("--alpha", type=_unit_float, default=0.15, help="miscoverage level")
    p.add_argument("--generator", choices=sorted(GENERATORS), default="bernoulli")
    p.add_argument("--seed", type=_nonneg_int, required=True)
    p.add_argument("--records", type=_positive_int, default=400)
    _add_calibration_flags(p)
    p.set_defaults(delta=0.05)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, metavar="FILE", help=config_help)
    p.set_defaults(func=cmd_fwer)
    flags["fwer"] = p.flags
    parser.command_flags = flags  # type: ignore[attr-defined]
    return parser


def _config_tokens(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Flag tokens from the ``--config`` file named in ``argv`` (empty if none)."""
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    if path is None or not argv or argv[0].startswith("-"):
        return []
    doc = io.read_json(path)
    if not isinstance(doc, dict):
        raise InvalidInputError(f"{path}: config must be a JSON object")
    known = parser.command_flags.get(argv[0], set())  # type: ignore[attr-defined]
    tokens = []
    for key, value in doc.items():
        flag = "--" + str(key)
        if flag not in known or flag in ("--config", "--help"):
            raise UsageError(f"{path}: unknown config key {key!r}")
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, (dict, bool)) or value is None:
            raise UsageError(f"{path}: config key {key!r} needs a number or string")
        tokens += [flag, str(value)]
    return tokens


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        extra = _config_tokens(parser, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rcip: error: {exc}", file=sys.stderr)
        return 2
    except (InvalidInputError, OSError) as exc:
        print(f"rcip: error: {exc}", file=sys.stderr)
        return 1
    # file values first so that explicit flags override them
    args = parser.parse_args(argv[:1] + extra + argv[1:])  # exits 2 on bad usage
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rcip {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (InvalidInputError, OSError) as exc:
        print(f"rcip {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
