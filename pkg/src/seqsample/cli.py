"""Command-line interface.

Every option is declared once in ``FLAGS``; the parsers and their help text
are generated from it. Option values resolve as: command-line flag, then the
JSON ``--config`` file, then the built-in default.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .estimators import A2RP, SRP, ScenarioOracle, anova_decompose
from .experiments import ExperimentConfig, cpu_count, gap_oracle, run_experiment
from .lp import write_lp
from .model import InstanceError, load_instance
from .sampling import METHODS, RngStream, draw_sample
from .sequential import (
    DEFAULT_ALPHA, DEFAULT_CAP, DEFAULT_EPS, DEFAULT_EPS_PRIME, SUBLINEAR, SUPERLINEAR, CalibrationError, Schedule,
    calibrate_h_prime, estimate_at, nonsequential_ci, record_to_csv, run_sequential,
)
from .solver import Evaluator, SolverError, build_extensive_form, merge_scenarios, solve_saa, solve_weighted

SEED_ENV = "SEQSAMPLE_SEED"
COMMANDS = ("solve", "assess", "oracle", "calibrate", "sequential", "experiment")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Flag:
    name: str
    help: str
    commands: tuple[str, ...]
    type: object = str
    default: object = None
    choices: tuple | None = None
    action: str | None = None


_SCHED = ("assess", "calibrate", "sequential", "experiment")
_ALL = COMMANDS

FLAGS = (
    Flag("instance", "instance file (bundled names such as newsvendor4.inst are found automatically)", _ALL),
    Flag("config", "JSON file with option values; command-line flags take precedence", _ALL),
    Flag("seed", f"master seed (default: ${SEED_ENV} or 0)", _ALL, int),
    Flag("method", "sampling method", ("solve", "assess", "calibrate", "sequential"), str, "IID", METHODS),
    Flag("assess", "gap estimator", ("assess", "calibrate", "sequential"), str, A2RP, (SRP, A2RP)),
    Flag("n", "sample size", ("solve", "assess"), int, 100),
    Flag("replication", "replication index used to derive the random streams", ("solve", "assess", "sequential"),
         int, 0),
    Flag("x", "candidate first-stage solution, comma separated", ("assess", "oracle")),
    Flag("exact", "solve over all scenarios with their probabilities instead of a sample", ("solve",),
         action="store_true"),
    Flag("schedule", "sample-size schedule", _SCHED, str, SUBLINEAR, (SUBLINEAR, SUPERLINEAR)),
    Flag("p", "schedule rate constant (default 0.191 sublinear, 4.67e-3 superlinear)", _SCHED, float),
    Flag("q", "superlinear exponent (default 1.5)", _SCHED, float),
    Flag("alpha", "confidence parameter in (0, 1)", _SCHED + ("oracle",), float, DEFAULT_ALPHA),
    Flag("n1", "initial sample size used to derive dh = h - h' (default 100 unless --dh is given)", _SCHED, int),
    Flag("dh", "gap between the interval and stopping multipliers, h - h'", _SCHED, float),
    Flag("per-method", "size each method at its own minimum instead of one shared size", _SCHED,
         action="store_true"),
    Flag("h-prime", "stopping multiplier h'", ("assess", "sequential", "experiment"), float),
    Flag("calibrate", "estimate h' by pilot runs before the sequential run", ("sequential",), action="store_true"),
    Flag("calibration-reps", "pilot runs used to estimate h'", ("calibrate", "sequential", "experiment"), int, 25),
    Flag("calibration-iters", "iteration at which pilot runs are measured", ("calibrate", "sequential", "experiment"),
         int, 5),
    Flag("calibration-factor", "multiplier applied to avg GAP / sqrt(avg SV)", ("calibrate", "sequential",
                                                                                "experiment"), float, 0.8),
    Flag("eps", "interval offset epsilon", ("assess", "sequential", "experiment", "oracle"), float, DEFAULT_EPS),
    Flag("eps-prime", "stopping offset epsilon'", ("assess", "sequential", "experiment", "oracle"), float,
         DEFAULT_EPS_PRIME),
    Flag("cap", "iteration cap", ("sequential", "experiment"), int, DEFAULT_CAP),
    Flag("bound-b", "also require sqrt(SV) <= b before stopping", ("sequential", "experiment"), float),
    Flag("anova", "also report the ANOVA residual range and schedule eligibility", ("oracle",),
         action="store_true"),
    Flag("pairs", "method pairs as METHOD:ASSESS, comma separated", ("experiment",), str,
         "IID:A2RP,2I:A2RP,AV:A2RP,LHS:A2RP"),
    Flag("replications", "number of replications", ("experiment",), int, 300),
    Flag("jobs", "parallel worker processes", ("experiment",), int, 1),
    Flag("outdir", "directory for table4.csv, table6.csv and runs/", ("experiment",), str, "results"),
    Flag("compare-x", "fixed candidate for the table6.csv comparison, comma separated", ("experiment",)),
    Flag("compare-n", "sample size of the non-sequential comparison", ("experiment",), int),
    Flag("output", "write the CSV result here instead of standard output", ("solve", "assess", "oracle",
                                                                            "calibrate", "sequential")),
    Flag("dump-samples", "write the generated sample(s) as CSV to this path", ("solve", "assess")),
    Flag("export-lp", "write the extensive form in CPLEX LP format to this path", ("solve",)),
)

REQUIRED = {"instance": _ALL, "x": ("assess", "oracle")}

COMMAND_HELP = {
    "solve": "solve a sampled (or the full) extensive form",
    "assess": "one gap estimate with sequential and non-sequential intervals",
    "oracle": "exact gap and standard deviations of a candidate by enumeration",
    "calibrate": "estimate the stopping multiplier h'",
    "sequential": "one sequential run",
    "experiment": "replicated runs of several method pairs with summary tables",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="seqsample", description="Sequential sampling with variance reduction "
                                     "for two-stage stochastic linear programs.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd, help=COMMAND_HELP[cmd], description=COMMAND_HELP[cmd])
        for fl in FLAGS:
            if cmd not in fl.commands:
                continue
            dest = fl.name.replace("-", "_")
            help_text = fl.help
            if fl.default is not None and fl.action is None:
                help_text += f" (default: {fl.default})"
            if fl.action:
                sp.add_argument(f"--{fl.name}", dest=dest, action=fl.action, default=None, help=help_text)
            else:
                sp.add_argument(f"--{fl.name}", dest=dest, type=fl.type, default=None, choices=fl.choices,
                                help=help_text)
    return parser


def resolve(args, command):
    """Merge flags, config file and defaults into a plain dict."""
    file_values = {}
    if getattr(args, "config", None):
        try:
            file_values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"--config: cannot read {args.config}: {err}") from None
        if not isinstance(file_values, dict):
            raise ConfigError("--config: file must hold a JSON object")
    known = {fl.name.replace("-", "_"): fl for fl in FLAGS if command in fl.commands}
    unknown = [k for k in file_values if k.replace("-", "_") not in known]
    if unknown:
        raise ConfigError(f"--config: unknown option(s) for {command}: {', '.join(sorted(unknown))}")
    file_values = {k.replace("-", "_"): v for k, v in file_values.items()}
    out = {}
    for dest, fl in known.items():
        v = getattr(args, dest, None)
        if v is None or (fl.action == "store_true" and v is False):
            v = file_values.get(dest)
            if v is not None and fl.action is None:
                try:
                    v = fl.type(v)
                except (TypeError, ValueError):
                    raise ConfigError(f"--config: bad value for {fl.name}: {v!r}") from None
        if v is None:
            v = fl.default
        if fl.action == "store_true":
            v = bool(v)
        out[dest] = v
    if "seed" in out and out["seed"] is None:
        out["seed"] = int(os.environ.get(SEED_ENV, "0"))
    for name, cmds in REQUIRED.items():
        if command in cmds and out.get(name.replace("-", "_")) is None:
            raise ConfigError(f"--{name} is required for {command}")
    _validate(out)
    return out


def _validate(o):
    if "alpha" in o and not 0.0 < o["alpha"] < 1.0:
        raise ConfigError(f"--alpha must lie in (0, 1) (got {o['alpha']})")
    if "eps" in o and not o["eps"] > o["eps_prime"] > 0:
        raise ConfigError(f"--eps and --eps-prime must satisfy eps > eps' > 0 (got {o['eps']}, {o['eps_prime']})")
    if o.get("n1") is not None and o.get("dh") is not None:
        raise ConfigError("--n1 and --dh are mutually exclusive")
    if o.get("n1") is not None and o["n1"] < 4:
        raise ConfigError(f"--n1 must be at least 4 (got {o['n1']})")
    if o.get("dh") is not None and not o["dh"] > 0:
        raise ConfigError(f"--dh must be positive (got {o['dh']})")
    if o.get("h_prime") is not None and o["h_prime"] < 0:
        raise ConfigError(f"--h-prime must be nonnegative (got {o['h_prime']})")
    if o.get("q") is not None and not o["q"] > 1:
        raise ConfigError(f"--q must exceed 1 (got {o['q']})")
    if o.get("p") is not None and not o["p"] > 0:
        raise ConfigError(f"--p must be positive (got {o['p']})")
    for key in ("cap", "replications", "jobs", "n", "calibration_reps"):
        if o.get(key) is not None and o[key] < 1:
            raise ConfigError(f"--{key.replace('_', '-')} must be at least 1 (got {o[key]})")


def _schedule(o):
    n1 = o["n1"] if o["dh"] is None and o["n1"] is not None else (None if o["dh"] is not None else 100)
    return Schedule.build(o["schedule"], o["p"], o["q"], o["alpha"], dh=o["dh"], n1=n1, per_method=o["per_method"])


def _vector(text, n, flag="--x"):
    try:
        x = np.array([float(t) for t in str(text).split(",")])
    except ValueError:
        raise ConfigError(f"{flag}: cannot parse {text!r}") from None
    if x.size != n:
        raise ConfigError(f"{flag}: expected {n} values, got {x.size}")
    return x


def _pairs(text):
    out = []
    for item in text.split(","):
        try:
            m, a = item.split(":")
        except ValueError:
            raise ConfigError(f"--pairs: bad item {item!r} (want METHOD:ASSESS)") from None
        if m not in METHODS or a not in (SRP, A2RP):
            raise ConfigError(f"--pairs: unknown pair {item!r}")
        out.append((m, a))
    return tuple(out)


def _emit(rows, path, out):
    if path:
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    else:
        csv.writer(out, lineterminator="\n").writerows(rows)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _xstr(x):
    return ";".join(repr(float(v)) for v in x)


# ---------------------------------------------------------------------------
# commands

def cmd_solve(o, out):
    inst = load_instance(o["instance"])
    if o["exact"]:
        oracle = ScenarioOracle(inst)
        points, weights = oracle.points, oracle.probs
        res = solve_weighted(inst, points, weights, merge=False)
    else:
        rng = RngStream(o["seed"], o["replication"], "solution", 1)
        sample = draw_sample(o["method"], o["n"], inst, rng)
        if o["dump_samples"]:
            sample.write_csv(o["dump_samples"])
        points, weights = merge_scenarios(sample.points)
        res = solve_saa(inst, sample)
    if o["export_lp"]:
        write_lp(build_extensive_form(inst, points, weights), o["export_lp"])
    _emit([["instance", "n_scenarios", "value", "x"], [inst.name, len(weights), _fmt(res.value), _xstr(res.x)]],
          o["output"], out)


def cmd_assess(o, out):
    inst = load_instance(o["instance"])
    x = _vector(o["x"], inst.n1)
    sched = _schedule(o)
    ev = Evaluator(inst)
    est = estimate_at(inst, x, o["method"], o["assess"], o["n"], o["seed"], o["replication"], 1, ev)
    if o["dump_samples"]:
        purposes = ("assess",) if o["assess"] == SRP else ("assess-1", "assess-2")
        n = o["n"] if o["assess"] == SRP else o["n"] // 2
        for p in purposes:
            s = draw_sample(o["method"], n, inst, RngStream(o["seed"], o["replication"], p, 1))
            s.write_csv(o["dump_samples"] if len(purposes) == 1 else f"{o['dump_samples']}.{p}")
    h_prime = o["h_prime"] if o["h_prime"] is not None else 0.0
    seq_upper = (h_prime + sched.dh) * math.sqrt(est.sv) + o["eps"]
    rows = [["method", "assess", "n", "gap", "sv", "h", "ci_sequential_upper", "ci_nonsequential_upper"],
            [est.method, est.assess, est.n, _fmt(est.gap), _fmt(est.sv), _fmt(h_prime + sched.dh),
             _fmt(seq_upper), _fmt(nonsequential_ci(est, o["alpha"]))]]
    _emit(rows, o["output"], out)


def cmd_oracle(o, out):
    inst = load_instance(o["instance"])
    x = _vector(o["x"], inst.n1)
    oracle = ScenarioOracle(inst)
    ex = oracle.exact(x)
    header = ["gap", "sigma_IID", "sigma_2I", "sigma_AV", "sigma_LHS", "z_star", "x_star"]
    row = [_fmt(ex.gap), _fmt(ex.sigma("IID")), _fmt(ex.sigma("2I")), _fmt(ex.sigma("AV")), _fmt(ex.sigma("LHS")),
           _fmt(ex.z_star), _xstr(ex.x_star)]
    if o["anova"]:
        an = anova_decompose(inst, x, oracle=oracle)
        header += ["anova_m", "anova_M", "eligible"]
        row += [_fmt(an.m), _fmt(an.M), int(an.eligible(o["eps"], o["eps_prime"]))]
    _emit([header, row], o["output"], out)


def cmd_calibrate(o, out):
    inst = load_instance(o["instance"])
    sched = _schedule(o)
    h = calibrate_h_prime(inst, sched, o["method"], o["assess"], o["calibration_reps"], o["calibration_iters"],
                          o["calibration_factor"], o["seed"])
    _emit([["method", "assess", "h_prime", "dh"], [o["method"], o["assess"], _fmt(h), _fmt(sched.dh)]],
          o["output"], out)


def cmd_sequential(o, out):
    inst = load_instance(o["instance"])
    sched = _schedule(o)
    ev = Evaluator(inst)
    if o["calibrate"]:
        h_prime = calibrate_h_prime(inst, sched, o["method"], o["assess"], o["calibration_reps"],
                                    o["calibration_iters"], o["calibration_factor"], o["seed"], ev)
    elif o["h_prime"] is not None:
        h_prime = o["h_prime"]
    else:
        raise ConfigError("sequential needs --h-prime or --calibrate")
    rec = run_sequential(inst, sched, o["method"], o["assess"], h_prime, o["eps"], o["eps_prime"], None,
                         o["seed"], o["replication"], o["cap"], ev, o["bound_b"])
    text = record_to_csv(rec)
    if o["output"]:
        Path(o["output"]).write_text(text)
    else:
        out.write(text)
    if not rec.terminated:
        print(f"error: iteration cap {o['cap']} reached without stopping", file=sys.stderr)
        return 3
    return 0


def cmd_experiment(o, out):
    inst = load_instance(o["instance"])
    sched = _schedule(o)
    pairs = _pairs(o["pairs"])
    h_primes = {p: o["h_prime"] for p in pairs} if o["h_prime"] is not None else {}
    cfg = ExperimentConfig(inst, sched, pairs, h_primes, o["eps"], o["eps_prime"], o["seed"], o["cap"],
                           o["bound_b"], o["calibration_reps"], o["calibration_iters"], o["calibration_factor"])
    jobs = o["jobs"]
    compare_x = _vector(o["compare_x"], inst.n1, "--compare-x") if o["compare_x"] else None
    res = run_experiment(cfg, o["replications"], o["outdir"], jobs, gap_oracle(inst, seed=o["seed"]),
                         compare_x, o["compare_n"])
    cap_outs = sum(r.cap_outs for r in res.summary)
    out.write(f"wrote {Path(o['outdir']) / 'table4.csv'} ({len(res.records)} runs, {cap_outs} cap-outs)\n")
    return 0


HANDLERS = {"solve": cmd_solve, "assess": cmd_assess, "oracle": cmd_oracle, "calibrate": cmd_calibrate,
            "sequential": cmd_sequential, "experiment": cmd_experiment}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        opts = resolve(args, args.command)
        code = HANDLERS[args.command](opts, out)
        return int(code or 0)
    except (ConfigError, InstanceError, FileNotFoundError, SolverError, CalibrationError, ValueError) as err:
        print(f"error: {args.command}: {err}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


__all__ = ["main", "build_parser", "FLAGS", "cpu_count"]
