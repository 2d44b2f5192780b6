"""Replication harness, coverage estimates and summary tables."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimators import A2RP, ScenarioOracle
from .model import TwoStageLP, scenario_count
from .sampling import RngStream, sample_lhs
from .sequential import (
    DEFAULT_CAP, DEFAULT_EPS, DEFAULT_EPS_PRIME, FixedCandidate, RunRecord, SAACandidates, Schedule,
    TRACE_COLUMNS, calibrate_h_prime, estimate_at, min_sample_size, normal_quantile, nonsequential_ci, run_sequential,
    trace_rows,
)
from .solver import Evaluator, solve_saa

DEFAULT_PAIRS = (("IID", A2RP), ("2I", A2RP), ("AV", A2RP), ("LHS", A2RP))
# variant -> baseline for the width-ratio column
RATIO_BASELINE = {"LHS": "IID", "AV": "2I"}
CONFIDENCE = 0.90


class ExperimentError(RuntimeError):
    def __init__(self, failures):
        self.failures = failures
        lines = "; ".join(f"replication {i}: {msg}" for i, msg in failures)
        super().__init__(f"{len(failures)} replication(s) failed: {lines}")


@dataclass
class ExperimentConfig:
    inst: TwoStageLP
    schedule: Schedule
    pairs: tuple = DEFAULT_PAIRS
    h_primes: dict = field(default_factory=dict)
    eps: float = DEFAULT_EPS
    eps_prime: float = DEFAULT_EPS_PRIME
    seed: int = 0
    cap: int = DEFAULT_CAP
    bound_b: float | None = None
    calibration_reps: int = 25
    calibration_iters: int = 5
    calibration_factor: float = 0.8

    def __post_init__(self):
        self.pairs = tuple(tuple(p) for p in self.pairs)
        if not self.eps > self.eps_prime > 0:
            raise ValueError(f"need eps > eps' > 0 (got eps={self.eps}, eps'={self.eps_prime})")

    def calibrate(self, evaluator=None):
        """Fill in h' for every pair that lacks one."""
        evaluator = Evaluator(self.inst) if evaluator is None else evaluator
        for method, assess in self.pairs:
            if (method, assess) not in self.h_primes:
                self.h_primes[(method, assess)] = calibrate_h_prime(
                    self.inst, self.schedule, method, assess, self.calibration_reps, self.calibration_iters,
                    self.calibration_factor, self.seed, evaluator)
        return self.h_primes


# ---------------------------------------------------------------------------
# replications

_WORKER_STATE: dict = {}


def _evaluator_for(inst):
    ev = _WORKER_STATE.get("evaluator")
    if ev is None or ev.inst is not inst:
        ev = _WORKER_STATE["evaluator"] = Evaluator(inst)
    return ev


def _run_one(config: ExperimentConfig, r: int, evaluator: Evaluator):
    cand = SAACandidates(config.inst, config.seed, r)
    out = []
    for method, assess in config.pairs:
        out.append(run_sequential(
            config.inst, config.schedule, method, assess, config.h_primes[(method, assess)], config.eps,
            config.eps_prime, cand, config.seed, r, config.cap, evaluator, config.bound_b))
    return out


def _run_chunk(config: ExperimentConfig, reps):
    evaluator = _evaluator_for(config.inst)
    results, failures = [], []
    for r in reps:
        try:
            results.append((r, _run_one(config, r, evaluator)))
        except Exception as err:  # reported with the replication index
            failures.append((r, f"{type(err).__name__}: {err}"))
    return results, failures


def run_replications(config: ExperimentConfig, R: int, parallel: int = 1, start: int = 0):
    """``R`` independent runs of every configured pair.

    Returns records ordered by replication index and then by pair order, so
    the output does not depend on ``parallel``.
    """
    if R < 1:
        raise ValueError("need at least one replication")
    missing = [p for p in config.pairs if p not in config.h_primes]
    if missing:
        raise ValueError(f"no h' for {missing}; calibrate first")
    reps = list(range(start, start + R))
    if parallel <= 1:
        chunks = [_run_chunk(config, reps)]
    else:
        parts = [reps[i::parallel] for i in range(parallel) if reps[i::parallel]]
        with ProcessPoolExecutor(max_workers=len(parts)) as pool:
            chunks = list(pool.map(_run_chunk, [config] * len(parts), parts))
    results = sorted((item for res, _ in chunks for item in res), key=lambda t: t[0])
    failures = sorted(f for _, fail in chunks for f in fail)
    if failures:
        raise ExperimentError(failures)
    return [rec for _, recs in results for rec in recs]


# ---------------------------------------------------------------------------
# statistics

def _z(confidence=CONFIDENCE):
    return normal_quantile(0.5 + confidence / 2.0)


def mean_halfwidth(values, confidence=CONFIDENCE):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), _z(confidence) * float(values.std(ddof=1)) / math.sqrt(values.size)


def proportion_interval(successes: int, total: int, confidence=CONFIDENCE, wilson=False):
    """``(p_hat, half_width)``; normal approximation unless ``wilson``."""
    p = successes / total
    z = _z(confidence)
    if not wilson:
        return p, z * math.sqrt(p * (1.0 - p) / total)
    denom = 1.0 + z * z / total
    return p, z * math.sqrt(p * (1.0 - p) / total + z * z / (4.0 * total * total)) / denom


def covered(rec: RunRecord, gap_of) -> bool:
    return gap_of(rec.x_T) <= rec.ci_upper


def coverage(records, gap_of, confidence=CONFIDENCE, wilson=False):
    """Fraction of runs whose interval contains the true gap of the returned solution."""
    records = list(records)
    bad = [r.replication for r in records if not r.terminated]
    if bad:
        raise ValueError(f"non-terminated runs present (replications {bad}); raise the iteration cap")
    if not records:
        raise ValueError("no records")
    hits = sum(covered(r, gap_of) for r in records)
    return proportion_interval(hits, len(records), confidence, wilson)


@dataclass(frozen=True)
class SummaryRow:
    method: str
    assess: str
    R: int
    h_prime: float
    T_mean: float
    T_hw: float
    width_mean: float
    width_hw: float
    ratio: float | None
    coverage: float
    coverage_hw: float
    cap_outs: int
    approximate: bool = False


SUMMARY_HEADER = ("method", "assess", "R", "h_prime", "T_mean", "T_hw", "width_mean", "width_hw",
                  "ci_ratio", "coverage", "coverage_hw", "cap_outs", "approximate")


def group_records(records):
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.method, rec.assess), []).append(rec)
    return groups


def summarize(records, gap_of, confidence=CONFIDENCE, wilson=False, approximate=False):
    """One summary row per method pair; width ratios pair LHS with IID and AV with 2I."""
    groups = group_records(records)
    counts = {len(v) for v in groups.values()}
    if len(counts) > 1:
        raise ValueError(f"mismatched replication counts across pairs: {sorted(counts)}")
    widths = {}
    rows = []
    for (method, assess), recs in groups.items():
        done = [r for r in recs if r.terminated]
        w = [r.ci_upper for r in done]
        widths[(method, assess)] = float(np.mean(w)) if w else math.nan
    for (method, assess), recs in groups.items():
        done = [r for r in recs if r.terminated]
        cap_outs = len(recs) - len(done)
        T_mean, T_hw = mean_halfwidth([r.T for r in done], confidence) if done else (math.nan, math.nan)
        w_mean, w_hw = mean_halfwidth([r.ci_upper for r in done], confidence) if done else (math.nan, math.nan)
        if done:
            hits = sum(covered(r, gap_of) for r in done)
            cov, cov_hw = proportion_interval(hits, len(recs), confidence, wilson)
        else:
            cov, cov_hw = 0.0, 0.0
        ratio = None
        base = RATIO_BASELINE.get(method)
        if base is not None and (base, assess) in widths:
            ratio = widths[(base, assess)] / widths[(method, assess)]
        rows.append(SummaryRow(method, assess, len(recs), recs[0].h_prime, T_mean, T_hw, w_mean, w_hw, ratio,
                               cov, cov_hw, cap_outs, approximate))
    return rows


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def write_summary_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([_cell(getattr(r, f)) for f in (
                "method", "assess", "R", "h_prime", "T_mean", "T_hw", "width_mean", "width_hw", "ratio",
                "coverage", "coverage_hw", "cap_outs", "approximate")])


def write_traces(records, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for (method, assess), recs in group_records(records).items():
        with open(outdir / f"{method}_{assess}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS + ("T", "ci_upper"))
            for rec in recs:
                for row in trace_rows(rec):
                    w.writerow(row + [rec.T if rec.terminated else "", repr(rec.ci_upper)])


# ---------------------------------------------------------------------------
# reference gaps

class ApproximateGapOracle:
    """Gap reference for instances that cannot be enumerated.

    Solves an SAA on a Latin hypercube sample of size ``n_ref`` and estimates
    ``E f(x) - E f(x_ref)`` on an independent Latin hypercube sample of the
    same size. Results are approximate; the extensive form grows with
    ``n_ref``.
    """

    approximate = True

    def __init__(self, inst: TwoStageLP, n_ref: int = 50_000, seed: int = 0):
        self.inst = inst
        self.evaluator = Evaluator(inst)
        self.x_ref = solve_saa(inst, sample_lhs(n_ref, inst, RngStream(seed, 0, "reference-solve", 0))).x
        self.eval_sample = sample_lhs(n_ref, inst, RngStream(seed, 0, "reference-eval", 0))
        self._cache: dict[bytes, float] = {}

    def gap_of(self, x):
        key = np.asarray(x, float).tobytes()
        if key not in self._cache:
            diff = self.evaluator.diff(np.asarray(x, float), self.x_ref, self.eval_sample.points)
            self._cache[key] = max(float(diff.mean()), 0.0)
        return self._cache[key]


def gap_oracle(inst: TwoStageLP, cap: int = 10_000, n_ref: int = 50_000, seed: int = 0):
    if scenario_count(inst) <= cap:
        oracle = ScenarioOracle(inst, cap)
        oracle.approximate = False
        return oracle
    return ApproximateGapOracle(inst, n_ref, seed)


# ---------------------------------------------------------------------------
# fixed-candidate comparison

@dataclass(frozen=True)
class MethodStats:
    mode: str
    method: str
    assess: str
    quantity: str
    mean: float
    var: float
    bias: float
    exact: float


TABLE6_HEADER = ("mode", "assess", "quantity", "baseline", "variant", "exact_baseline", "exact_variant",
                 "baseline_mean", "variant_mean", "reduction_mean_pct", "baseline_var", "variant_var",
                 "reduction_var_pct", "baseline_bias", "variant_bias", "reduction_bias_pct")


def percent_reduction(baseline: float, variant: float) -> float:
    """``(baseline - variant) / baseline * 100``; positive means the variant is smaller."""
    if baseline == 0:
        return 0.0 if variant == 0 else -math.inf
    return (baseline - variant) / baseline * 100.0


def _stats(mode, method, assess, quantity, values, exact, relative):
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    var = float(values.var(ddof=1)) if values.size > 1 else 0.0
    bias = mean - exact
    if relative and mean != 0:
        bias /= mean
    return MethodStats(mode, method, assess, quantity, mean, var, bias, exact)


def compare_nonsequential(inst: TwoStageLP, x, n: int, R: int, methods=DEFAULT_PAIRS, seed: int = 0,
                          schedule: Schedule | None = None, h_primes=None, eps=DEFAULT_EPS,
                          eps_prime=DEFAULT_EPS_PRIME, cap=DEFAULT_CAP, alpha=0.10, oracle=None):
    """Bias and variance of GAP, sqrt(SV) and interval width at a fixed candidate ``x``.

    The non-sequential mode takes one estimate of size ``n`` per replication.
    The sequential mode (when ``schedule`` and ``h_primes`` are given) runs
    the controller with ``x`` pinned as the candidate. Returns the per-method
    statistics and the LHS-vs-IID / AV-vs-2I reduction rows.
    """
    oracle = ScenarioOracle(inst) if oracle is None else oracle
    x = np.asarray(x, dtype=float)
    exact = oracle.exact(x)
    G = exact.gap
    evaluator = oracle.evaluator
    stats = []
    for method, assess in methods:
        sig = exact.sigma(method)
        gaps, roots, widths = [], [], []
        for r in range(R):
            est = estimate_at(inst, x, method, assess, n, seed, r, 0, evaluator, purpose_prefix="compare:")
            gaps.append(est.gap)
            roots.append(math.sqrt(est.sv))
            widths.append(nonsequential_ci(est, alpha))
        stats += [_stats("nonsequential", method, assess, "GAP", gaps, G, False),
                  _stats("nonsequential", method, assess, "sqrtSV", roots, sig, True),
                  _stats("nonsequential", method, assess, "CI", widths, G, False)]
        if schedule is not None and h_primes is not None:
            gaps, roots, widths = [], [], []
            fixed = FixedCandidate(x)
            for r in range(R):
                rec = run_sequential(inst, schedule, method, assess, h_primes[(method, assess)], eps, eps_prime,
                                     fixed, seed, r, cap, evaluator)
                gaps.append(rec.final.gap)
                roots.append(math.sqrt(rec.final.sv))
                widths.append(rec.ci_upper)
            stats += [_stats("sequential", method, assess, "GAP", gaps, G, False),
                      _stats("sequential", method, assess, "sqrtSV", roots, sig, True),
                      _stats("sequential", method, assess, "CI", widths, G, False)]
    return stats, reduction_rows(stats)


def reduction_rows(stats):
    index = {(s.mode, s.method, s.assess, s.quantity): s for s in stats}
    rows = []
    for (mode, method, assess, quantity), v in index.items():
        base = RATIO_BASELINE.get(method)
        b = index.get((mode, base, assess, quantity)) if base else None
        if b is None:
            continue
        rows.append((mode, assess, quantity, base, method, b.exact, v.exact, b.mean, v.mean,
                     percent_reduction(b.mean, v.mean), b.var, v.var, percent_reduction(b.var, v.var),
                     b.bias, v.bias, percent_reduction(abs(b.bias), abs(v.bias))))
    return rows


def write_table6(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE6_HEADER)
        for row in rows:
            w.writerow([_cell(v) for v in row])


# ---------------------------------------------------------------------------
# full pipeline

@dataclass
class ExperimentResult:
    records: list
    summary: list
    h_primes: dict
    table6: list | None = None


def run_experiment(config: ExperimentConfig, R: int, outdir, parallel: int = 1, oracle=None,
                   compare_x=None, compare_n: int | None = None, compare_R: int | None = None) -> ExperimentResult:
    """Calibrate (if needed), run all replications and write the CSV outputs.

    Writes ``table4.csv``, ``runs/<method>_<assess>.csv`` and, when a fixed
    candidate is given, ``table6.csv``.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    oracle = gap_oracle(config.inst, seed=config.seed) if oracle is None else oracle
    evaluator = oracle.evaluator
    _WORKER_STATE["evaluator"] = evaluator
    config.calibrate(evaluator)
    records = run_replications(config, R, parallel)
    summary = summarize(records, oracle.gap_of, approximate=getattr(oracle, "approximate", False))
    write_summary_csv(summary, outdir / "table4.csv")
    write_traces(records, outdir / "runs")
    table6 = None
    if compare_x is not None:
        _, table6 = compare_nonsequential(
            config.inst, compare_x, compare_n or min_sample_size(1, config.schedule), compare_R or R,
            config.pairs, config.seed, config.schedule, config.h_primes, config.eps, config.eps_prime, config.cap,
            config.schedule.alpha, oracle)
        write_table6(table6, outdir / "table6.csv")
    return ExperimentResult(records, summary, dict(config.h_primes), table6)


def cpu_count():
    return os.cpu_count() or 1
