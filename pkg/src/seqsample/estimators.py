"""Optimality-gap point estimators, their sample variances, and exact oracles.

For IID and LHS samples the gap estimate is the mean of the per-row
differences ``f(x, xi_i) - f(x_n, xi_i)``, with ``x_n`` an optimizer of the
SAA built on that same sample. For AV and 2I samples each pair is first
averaged, and the variance uses the ``n/2`` pair averages.

Exact quantities (true gap, per-method variances, ANOVA residual range) are
computed by enumerating every scenario of a finite-discrete instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .model import DEFAULT_CAP, TwoStageLP, scenario_grid, scenario_index
from .sampling import PAIRED, Sample
from .solver import Evaluator, SAAResult, solve_saa, solve_weighted

SRP = "SRP"
A2RP = "A2RP"


@dataclass(frozen=True, eq=False)
class GapEstimate:
    gap: float
    sv: float
    n: int
    method: str
    assess: str
    solutions: tuple[np.ndarray, ...]
    fingerprint: str = ""

    @property
    def pair(self):
        return (self.method, self.assess)


def _min_size(method):
    return 4 if method in PAIRED else 2


def estimate_from_diffs(diffs, sample: Sample):
    """(mean, variance) of row differences, pair-averaged for AV and 2I."""
    diffs = np.asarray(diffs, dtype=float)
    if sample.method in PAIRED:
        diffs = diffs[sample.pairing].mean(axis=1)
    gap = float(diffs.mean())
    sv = float(diffs.var(ddof=1)) if diffs.size > 1 else 0.0
    return gap, sv


def gap_srp(inst: TwoStageLP, x, sample: Sample, evaluator: Evaluator | None = None,
            saa: SAAResult | None = None) -> GapEstimate:
    """Single-replication gap estimate of candidate ``x`` on ``sample``."""
    if sample.n < _min_size(sample.method):
        raise ValueError(f"{sample.method} gap estimate needs n >= {_min_size(sample.method)} (got {sample.n}); "
                         "variance undefined")
    evaluator = Evaluator(inst) if evaluator is None else evaluator
    saa = solve_saa(inst, sample) if saa is None else saa
    x = np.asarray(x, dtype=float)
    gap, sv = estimate_from_diffs(evaluator.diff(x, saa.x, sample.points), sample)
    return GapEstimate(gap, sv, sample.n, sample.method, SRP, (saa.x,), sample.fingerprint())


def combine_a2rp(first: GapEstimate, second: GapEstimate) -> GapEstimate:
    if first.method != second.method:
        raise ValueError(f"A2RP halves must use the same sampling method ({first.method} vs {second.method})")
    if first.n != second.n:
        raise ValueError(f"A2RP halves must be equal-sized ({first.n} vs {second.n})")
    return GapEstimate(
        0.5 * (first.gap + second.gap), 0.5 * (first.sv + second.sv), first.n + second.n,
        first.method, A2RP, first.solutions + second.solutions, first.fingerprint + second.fingerprint,
    )


def gap_a2rp(inst: TwoStageLP, x, half_1: Sample, half_2: Sample,
             evaluator: Evaluator | None = None) -> GapEstimate:
    """Average of two independent half-size SRP estimates and of their variances."""
    if half_1.method != half_2.method:
        raise ValueError(f"A2RP halves must use the same sampling method ({half_1.method} vs {half_2.method})")
    evaluator = Evaluator(inst) if evaluator is None else evaluator
    return combine_a2rp(gap_srp(inst, x, half_1, evaluator), gap_srp(inst, x, half_2, evaluator))


def d_estimator(inst: TwoStageLP, x, x_ref, sample: Sample, evaluator: Evaluator | None = None) -> float:
    """Plain sample mean of ``f(x, .) - f(x_ref, .)`` with a fixed optimal ``x_ref``."""
    evaluator = Evaluator(inst) if evaluator is None else evaluator
    diffs = evaluator.diff(np.asarray(x, float), np.asarray(x_ref, float), sample.points)
    return float(diffs.mean())


# ---------------------------------------------------------------------------
# exact oracles

def antithetic_coupling(inst: TwoStageLP):
    """Joint law of the scenario pair produced by uniforms ``u`` and ``1 - u``.

    Per dimension, [0, 1] is cut at every CDF jump of ``u`` and of ``1 - u``;
    inside each piece both inverse transforms are constant. Pieces of all
    dimensions are then combined by product. Returns flat scenario indices
    ``(a, a_prime)`` and the probability of each combination.
    """
    per_dim = []
    for m in inst.marginals:
        cuts = np.unique(np.concatenate([[0.0, 1.0], m.cdf_points, 1.0 - m.cdf_points]))
        cuts = cuts[(cuts >= 0.0) & (cuts <= 1.0)]
        lo, hi = cuts[:-1], cuts[1:]
        width = hi - lo
        keep = width > 0
        mid = 0.5 * (lo + hi)[keep]
        per_dim.append((m.ppf_index(mid), m.ppf_index(1.0 - mid), width[keep]))
    sizes = [m.values.size for m in inst.marginals]
    grids = np.meshgrid(*[np.arange(len(w)) for _, _, w in per_dim], indexing="ij")
    combo = [g.ravel() for g in grids]
    a = np.ravel_multi_index([per_dim[j][0][combo[j]] for j in range(inst.d)], sizes)
    ap = np.ravel_multi_index([per_dim[j][1][combo[j]] for j in range(inst.d)], sizes)
    prob = np.prod([per_dim[j][2][combo[j]] for j in range(inst.d)], axis=0)
    return a, ap, prob


def _weighted_var(values, probs):
    mu = float(values @ probs)
    return float(((values - mu) ** 2) @ probs)


@dataclass(frozen=True, eq=False)
class ExactQuantities:
    z_star: float
    x_star: np.ndarray
    x: np.ndarray
    gap: float
    sigma2: dict
    sigma2_max: dict | None
    oracle: "ScenarioOracle" = field(repr=False, default=None)

    def gap_of(self, x):
        return self.oracle.gap_of(x)

    def sigma(self, method):
        return float(np.sqrt(self.sigma2[method]))


class ScenarioOracle:
    """Exact solution, gaps and variances of an enumerable instance.

    Built once per instance; all per-x tables are cached through the shared
    evaluator.
    """

    def __init__(self, inst: TwoStageLP, cap: int = DEFAULT_CAP, evaluator: Evaluator | None = None):
        self.inst = inst
        self.points, self.probs = scenario_grid(inst, cap)
        self.evaluator = Evaluator(inst) if evaluator is None else evaluator
        self._gap_cache: dict[bytes, float] = {}

    @cached_property
    def solution(self) -> SAAResult:
        return solve_weighted(self.inst, self.points, self.probs, merge=False)

    @property
    def x_star(self):
        return self.solution.x

    def f_table(self, x):
        return self.evaluator.f(np.asarray(x, float), self.points)

    @cached_property
    def z_star(self):
        # evaluated through the same recourse solves as every other x, so gap_of(x_star) == 0
        return float(self.f_table(self.x_star) @ self.probs)

    def expected_f(self, x):
        return float(self.f_table(x) @ self.probs)

    def gap_of(self, x):
        key = np.asarray(x, float).tobytes()
        g = self._gap_cache.get(key)
        if g is None:
            g = self._gap_cache[key] = self.expected_f(x) - self.z_star
        return g

    @cached_property
    def coupling(self):
        return antithetic_coupling(self.inst)

    def variances(self, x, x_opt=None):
        """Per-method variance of the gap summand at ``x`` against optimum ``x_opt``."""
        x_opt = self.x_star if x_opt is None else np.asarray(x_opt, float)
        delta = self.f_table(x) - self.f_table(x_opt)
        s_iid = _weighted_var(delta, self.probs)
        a, ap, pr = self.coupling
        s_av = _weighted_var(0.5 * (delta[a] + delta[ap]), pr)
        return {"IID": s_iid, "LHS": s_iid, "2I": s_iid / 2.0, "AV": s_av}

    def exact(self, x, alt_optima=None, tol=1e-9) -> ExactQuantities:
        x = np.asarray(x, dtype=float)
        optima = [self.x_star]
        for alt in alt_optima or ():
            alt = np.asarray(alt, dtype=float)
            g = self.gap_of(alt)
            if g > tol * max(1.0, abs(self.z_star)):
                raise ValueError(f"supplied alternative optimum has gap {g:.3g} > 0")
            optima.append(alt)
        tables = [self.variances(x, xo) for xo in optima]
        sigma2 = {k: min(t[k] for t in tables) for k in tables[0]}
        sigma2_max = {k: max(t[k] for t in tables) for k in tables[0]} if alt_optima else None
        return ExactQuantities(self.z_star, self.x_star.copy(), x, self.gap_of(x), sigma2, sigma2_max, self)

    def scenario_values(self, x, points):
        """``f(x, .)`` at sample rows via the scenario table (rows must lie on the grid)."""
        return self.f_table(x)[scenario_index(self.inst, points)]


def exact_quantities(inst: TwoStageLP, x, alt_optima=None, cap: int = DEFAULT_CAP,
                     oracle: ScenarioOracle | None = None) -> ExactQuantities:
    """True gap and per-method variances at ``x`` by full enumeration."""
    oracle = ScenarioOracle(inst, cap) if oracle is None else oracle
    return oracle.exact(x, alt_optima)


# ---------------------------------------------------------------------------
# ANOVA

@dataclass(frozen=True, eq=False)
class AnovaResult:
    mean: float
    main_effects: tuple[np.ndarray, ...]
    residual: np.ndarray
    m: float
    M: float

    def eligible(self, eps, eps_prime):
        """Whether ``eps - eps_prime`` exceeds the residual range ``m + M``."""
        return bool(eps - eps_prime > self.m + self.M)


def anova_from_values(values, probs):
    """Main effects and residual range of a function tabulated on a product grid.

    ``values`` has one axis per component; ``probs`` lists each component's
    probability vector.
    """
    values = np.asarray(values, dtype=float)
    d = values.ndim
    mean = values
    for p in reversed(probs):
        mean = mean @ p
    mean = float(mean)
    effects = []
    for j in range(d):
        # contracting from the last axis down keeps axis k at position k
        t = values
        for k in reversed(range(d)):
            if k != j:
                t = np.tensordot(t, probs[k], axes=([k], [0]))
        effects.append(np.asarray(t, dtype=float) - mean)
    resid = values - mean
    for j, e in enumerate(effects):
        shape = [1] * d
        shape[j] = e.size
        resid = resid - e.reshape(shape)
    m = float(-resid.min()) + 0.0
    M = float(resid.max())
    return AnovaResult(mean, tuple(effects), resid, m, M)


def anova_decompose(inst: TwoStageLP, x, cap: int = DEFAULT_CAP, oracle: ScenarioOracle | None = None) -> AnovaResult:
    """ANOVA main effects of ``f(x, .)`` and the range ``[-m, M]`` of the residual."""
    oracle = ScenarioOracle(inst, cap) if oracle is None else oracle
    shape = [m.values.size for m in inst.marginals]
    table = oracle.f_table(x).reshape(shape)
    return anova_from_values(table, [m.probs for m in inst.marginals])
