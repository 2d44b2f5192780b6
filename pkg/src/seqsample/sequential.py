"""Sample-size schedules, the relative-width stopping rule and the run controller."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .estimators import A2RP, SRP, GapEstimate, combine_a2rp, gap_srp
from .model import TwoStageLP
from .sampling import METHODS, PAIRED, RngStream, draw_sample, sample_iid
from .solver import Evaluator, solve_saa

SUBLINEAR = "sublinear"
SUPERLINEAR = "superlinear"

DEFAULT_ALPHA = 0.10
DEFAULT_EPS = 2e-7
DEFAULT_EPS_PRIME = 1e-7
DEFAULT_CAP = 200
SUBLINEAR_P = 0.191
SUPERLINEAR_P = 4.67e-3
SUPERLINEAR_Q = 1.5

SERIES_TAIL_TOL = 1e-12
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class CalibrationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# normal quantile

_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00)


def normal_quantile(prob: float) -> float:
    """Standard normal quantile.

    Acklam's rational approximation (relative error about 1e-9) followed by
    one Halley step against ``erfc``, which brings the error to machine level.
    """
    if not 0.0 < prob < 1.0:
        if prob == 0.0:
            return -math.inf
        if prob == 1.0:
            return math.inf
        raise ValueError(f"probability must lie in [0, 1] (got {prob})")
    lo = 0.02425
    if prob < lo:
        r = math.sqrt(-2.0 * math.log(prob))
        x = ((((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5])
             / ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0))
    elif prob <= 1.0 - lo:
        r = prob - 0.5
        s = r * r
        x = ((((((_A[0] * s + _A[1]) * s + _A[2]) * s + _A[3]) * s + _A[4]) * s + _A[5]) * r
             / (((((_B[0] * s + _B[1]) * s + _B[2]) * s + _B[3]) * s + _B[4]) * s + 1.0))
    else:
        # 1 - prob is exact here, and the lower tail avoids cancellation in the correction step
        return -normal_quantile(1.0 - prob)
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - prob
    u = e * _SQRT_2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


# ---------------------------------------------------------------------------
# schedule constants

def _lognormal_series(p: float) -> float:
    """``sum_{j>=1} j^(-p ln j)`` with an analytic tail bound below SERIES_TAIL_TOL.

    With ``t = e^s`` the tail beyond ``J`` is at most
    ``exp(1/(4p)) sqrt(pi/p) / 2 * erfc(sqrt(p) (ln J - 1/(2p)))``.
    """
    def tail(J):
        z = math.sqrt(p) * (math.log(J) - 1.0 / (2.0 * p))
        return math.exp(1.0 / (4.0 * p)) * 0.5 * math.sqrt(math.pi / p) * math.erfc(z)

    J = 16
    while tail(J) > SERIES_TAIL_TOL:
        J *= 2
    j = np.arange(1, J + 1, dtype=float)
    lj = np.log(j)
    return float(np.exp(-p * lj * lj)[::-1].sum())


def _power_series(p: float, q: float) -> float:
    """``sum_{j>=1} exp(-p j^q)``; for ``t >= J`` we use ``t^q >= J^(q-1) t``,
    so the tail is at most ``exp(-p J^q) / (p J^(q-1))``."""
    def tail(J):
        return math.exp(-p * J ** q) / (p * J ** (q - 1.0))

    J = 16
    while tail(J) > SERIES_TAIL_TOL:
        J *= 2
    j = np.arange(1, J + 1, dtype=float)
    return float(np.exp(-p * j ** q)[::-1].sum())


def _c_from_series(total: float, alpha: float) -> float:
    return max(2.0 * math.log(total / (_SQRT_2PI * alpha)), 1.0)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1) (got {alpha})")


def compute_cp(p: float, alpha: float) -> float:
    if p <= 0:
        raise ValueError(f"p must be positive (got {p})")
    _check_alpha(alpha)
    return _c_from_series(_lognormal_series(p), alpha)


def compute_cpq(p: float, q: float, alpha: float) -> float:
    if p <= 0:
        raise ValueError(f"p must be positive (got {p})")
    if q <= 1:
        raise ValueError(f"q must exceed 1 (got {q})")
    _check_alpha(alpha)
    return _c_from_series(_power_series(p, q), alpha)


# ---------------------------------------------------------------------------
# schedules

@dataclass(frozen=True)
class Schedule:
    kind: str
    p: float
    alpha: float
    c: float
    dh: float
    q: float | None = None
    per_method: bool = False

    def __post_init__(self):
        if self.kind not in (SUBLINEAR, SUPERLINEAR):
            raise ValueError(f"schedule kind must be {SUBLINEAR} or {SUPERLINEAR} (got {self.kind!r})")
        if self.kind == SUPERLINEAR and (self.q is None or self.q <= 1):
            raise ValueError("superlinear schedule requires q > 1")
        if not self.c >= 1:
            raise ValueError(f"schedule constant must be at least 1 (got {self.c})")
        if not self.dh > 0:
            raise ValueError(f"dh = h - h' must be positive (got {self.dh})")
        _check_alpha(self.alpha)

    @classmethod
    def build(cls, kind=SUBLINEAR, p=None, q=None, alpha=DEFAULT_ALPHA, dh=None, n1=None, per_method=False):
        """Schedule from its rate parameters and either ``dh`` or a desired initial size ``n1``."""
        if kind == SUBLINEAR:
            p = SUBLINEAR_P if p is None else p
            c = compute_cp(p, alpha)
            q = None
        else:
            p = SUPERLINEAR_P if p is None else p
            q = SUPERLINEAR_Q if q is None else q
            c = compute_cpq(p, q, alpha)
        if (dh is None) == (n1 is None):
            raise ValueError("give exactly one of dh or n1")
        if dh is None:
            dh = _dh_for(n1, c + _growth(kind, p, q, 1))
        return cls(kind, p, alpha, c, dh, q, per_method)

    def growth(self, k):
        return _growth(self.kind, self.p, self.q, k)

    def bound(self, k):
        """Raw lower bound ``(c + growth(k)) / dh^2`` on the per-estimate size."""
        return (self.c + self.growth(k)) / (self.dh * self.dh)


def _growth(kind, p, q, k):
    if kind == SUBLINEAR:
        lk = math.log(k)
        return 2.0 * p * lk * lk
    return 2.0 * p * k ** q


def _dh_for(n1, c):
    return math.sqrt(c / (n1 / 2.0))


def dh_from_initial_size(n1: int, kind=SUBLINEAR, p=None, q=None, alpha=DEFAULT_ALPHA) -> float:
    """``dh`` for which the first shared sample size is ``n1``: ``dh = sqrt(c / (n1/2))``."""
    if n1 < 4:
        raise ValueError(f"initial sample size must be at least 4 (got {n1})")
    return Schedule.build(kind, p, q, alpha, n1=n1).dh


def _round_up(value, step):
    # the relative slack keeps exact round trips from landing one step too high
    return int(step * math.ceil(value * (1.0 - 1e-12) / step))


def min_sample_size(k: int, schedule: Schedule, assess: str = A2RP, method: str = "AV") -> int:
    """Sample size at iteration ``k``.

    By default one size serves every method: the smallest multiple of four
    whose half meets the bound. With ``schedule.per_method`` each method gets
    its own minimum (IID and LHS need ``n`` above the bound, AV and 2I need
    ``n/2`` above it).
    """
    if k < 1:
        raise ValueError(f"iteration index must be at least 1 (got {k})")
    r = schedule.bound(k)
    if not schedule.per_method:
        return max(4, _round_up(2.0 * r, 4))
    target = 2.0 * r if method in PAIRED else r
    step = 4 if (assess == A2RP and method in PAIRED) else (2 if (assess == A2RP or method in PAIRED) else 1)
    return max(_round_up(target, step), 2 * step if step < 4 else 4)


# ---------------------------------------------------------------------------
# candidates

class SAACandidates:
    """Candidate ``x_k`` from an SAA on a fresh IID sample of size ``n_k``.

    The draws use the ``solution`` stream of ``(seed, replication, k)``, so
    every sampling method sees the same candidate sequence.
    """

    def __init__(self, inst: TwoStageLP, seed: int, replication: int = 0, purpose: str = "solution"):
        self.inst = inst
        self.seed = seed
        self.replication = replication
        self.purpose = purpose
        self._memo: dict[tuple[int, int], np.ndarray] = {}

    def __call__(self, k: int, n: int) -> np.ndarray:
        key = (k, n)
        x = self._memo.get(key)
        if x is None:
            rng = RngStream(self.seed, self.replication, self.purpose, k)
            x = self._memo[key] = solve_saa(self.inst, sample_iid(n, self.inst, rng)).x
        return x


class FixedCandidate:
    def __init__(self, x):
        self.x = np.asarray(x, dtype=float)

    def __call__(self, k: int, n: int) -> np.ndarray:
        return self.x


# ---------------------------------------------------------------------------
# runs

@dataclass(frozen=True)
class IterationRecord:
    k: int
    n: int
    x: tuple[float, ...]
    gap: float
    sv: float
    stop: bool


@dataclass(frozen=True)
class RunRecord:
    method: str
    assess: str
    replication: int
    seed: int
    h_prime: float
    dh: float
    eps: float
    eps_prime: float
    trace: tuple[IterationRecord, ...]
    terminated: bool
    bound_b: float | None = None
    wall_time: float = field(default=0.0, compare=False)

    @property
    def h(self):
        return self.h_prime + self.dh

    @property
    def T(self):
        return self.trace[-1].k if self.terminated else None

    @property
    def final(self) -> IterationRecord:
        return self.trace[-1]

    @property
    def x_T(self):
        return np.array(self.final.x)

    @property
    def ci_upper(self):
        if not self.terminated:
            return math.inf
        if self.bound_b is not None:
            return self.h * self.bound_b + self.eps
        return self.h * math.sqrt(self.final.sv) + self.eps

    @property
    def ci(self):
        return (0.0, self.ci_upper)

    @property
    def stream_ids(self):
        return [(self.replication, p, it.k) for it in self.trace for p in ("solution", *assess_purposes(self.assess))]


TRACE_COLUMNS = ("method", "assess", "replication", "k", "n", "x", "gap", "sv", "stop")
SUMMARY_COLUMNS = ("method", "assess", "replication", "seed", "terminated", "T", "n_T", "x_T",
                   "gap", "sv", "h_prime", "h", "eps", "eps_prime", "ci_lower", "ci_upper")


def _fmt_x(x):
    return ";".join(repr(float(v)) for v in x)


def trace_rows(rec: RunRecord):
    for it in rec.trace:
        yield [rec.method, rec.assess, rec.replication, it.k, it.n, _fmt_x(it.x), repr(it.gap), repr(it.sv),
               int(it.stop)]


def summary_row(rec: RunRecord):
    f = rec.final
    return [rec.method, rec.assess, rec.replication, rec.seed, int(rec.terminated),
            rec.T if rec.terminated else "", f.n, _fmt_x(f.x), repr(f.gap), repr(f.sv),
            repr(rec.h_prime), repr(rec.h), repr(rec.eps), repr(rec.eps_prime), repr(0.0), repr(rec.ci_upper)]


def record_to_csv(rec: RunRecord) -> str:
    """Trace CSV (one row per iteration) followed by a ``# summary`` block."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    w.writerows(trace_rows(rec))
    buf.write("# summary\n")
    w.writerow(SUMMARY_COLUMNS)
    w.writerow(summary_row(rec))
    return buf.getvalue()


def assess_purposes(assess):
    return ("assess",) if assess == SRP else ("assess-1", "assess-2")


def estimate_at(inst: TwoStageLP, x, method: str, assess: str, n: int, seed: int, replication: int, k: int,
                evaluator: Evaluator, purpose_prefix: str = "") -> GapEstimate:
    """Gap estimate of ``x`` on fresh assessment draws for iteration ``k``."""
    if assess == SRP:
        rng = RngStream(seed, replication, purpose_prefix + "assess", k)
        return gap_srp(inst, x, draw_sample(method, n, inst, rng), evaluator)
    if assess != A2RP:
        raise ValueError(f"assessment must be {SRP} or {A2RP} (got {assess!r})")
    if n % 2 or (method in PAIRED and n % 4):
        raise ValueError(f"A2RP with {method} needs n divisible by {4 if method in PAIRED else 2} (got {n})")
    halves = [gap_srp(inst, x, draw_sample(method, n // 2, inst, RngStream(seed, replication, purpose_prefix + p, k)),
                      evaluator) for p in assess_purposes(A2RP)]
    return combine_a2rp(*halves)


def run_sequential(inst: TwoStageLP, schedule: Schedule, method: str, assess: str, h_prime: float,
                   eps: float = DEFAULT_EPS, eps_prime: float = DEFAULT_EPS_PRIME, candidates=None,
                   seed: int = 0, replication: int = 0, cap: int = DEFAULT_CAP,
                   evaluator: Evaluator | None = None, bound_b: float | None = None) -> RunRecord:
    """Iterate until ``GAP <= h' sqrt(SV) + eps'`` and report ``[0, h sqrt(SV) + eps]``.

    With ``bound_b`` set, stopping also requires ``sqrt(SV) <= b`` and the
    interval becomes ``[0, h b + eps]``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown sampling method {method!r}")
    if not eps > eps_prime > 0:
        raise ValueError(f"need eps > eps' > 0 (got eps={eps}, eps'={eps_prime})")
    if h_prime < 0:
        raise ValueError(f"h' must be nonnegative (got {h_prime})")
    if cap < 1:
        raise ValueError("iteration cap must be at least 1")
    started = time.perf_counter()
    evaluator = Evaluator(inst) if evaluator is None else evaluator
    candidates = SAACandidates(inst, seed, replication) if candidates is None else candidates
    trace = []
    for k in range(1, cap + 1):
        n = min_sample_size(k, schedule, assess, method)
        x = candidates(k, n)
        est = estimate_at(inst, x, method, assess, n, seed, replication, k, evaluator)
        root = math.sqrt(max(est.sv, 0.0))
        stop = est.gap <= h_prime * root + eps_prime
        if bound_b is not None:
            stop = stop and root <= bound_b
        trace.append(IterationRecord(k, n, tuple(float(v) for v in x), est.gap, est.sv, stop))
        if stop:
            break
    return RunRecord(method, assess, replication, seed, h_prime, schedule.dh, eps, eps_prime, tuple(trace),
                     trace[-1].stop, bound_b, time.perf_counter() - started)


def calibrate_h_prime(inst: TwoStageLP, schedule: Schedule, method: str, assess: str, reps: int = 25,
                      iters: int = 5, factor: float = 0.8, seed: int = 0,
                      evaluator: Evaluator | None = None, candidate_factory=None) -> float:
    """``factor * avg GAP / sqrt(avg SV)`` over ``reps`` runs taken to iteration ``iters``.

    The runs ignore the stopping test; because every iteration draws fresh
    samples, only the last iteration's estimate enters the averages, so only
    that one is computed. 2I reuses the IID value scaled by sqrt(2).
    """
    if reps < 2:
        raise ValueError("calibration needs at least 2 replications")
    if method == "2I":
        return math.sqrt(2.0) * calibrate_h_prime(inst, schedule, "IID", assess, reps, iters, factor, seed,
                                                  evaluator, candidate_factory)
    if factor == 0:
        return 0.0
    evaluator = Evaluator(inst) if evaluator is None else evaluator
    n = min_sample_size(iters, schedule, assess, method)
    gaps, svs = [], []
    for r in range(reps):
        if candidate_factory is None:
            cand = SAACandidates(inst, seed, r, purpose="calibrate:solution")
        else:
            cand = candidate_factory(r)
        x = cand(iters, n)
        est = estimate_at(inst, x, method, assess, n, seed, r, iters, evaluator, purpose_prefix="calibrate:")
        gaps.append(est.gap)
        svs.append(est.sv)
    avg_gap, avg_sv = float(np.mean(gaps)), float(np.mean(svs))
    if avg_sv <= 0:
        raise CalibrationError(
            f"calibration degenerate for ({method}, {assess}): average SV is 0 (instance too easy at n={n})")
    return factor * avg_gap / math.sqrt(avg_sv)


def nonsequential_ci(estimate: GapEstimate, alpha: float = DEFAULT_ALPHA) -> float:
    """Upper end of the one-shot interval ``[0, GAP + z sqrt(SV/m)]``.

    ``m`` is ``n`` for IID and LHS and ``n/2`` for AV and 2I.
    """
    _check_alpha(alpha)
    z = normal_quantile(1.0 - alpha)
    m = estimate.n / 2 if estimate.method in PAIRED else estimate.n
    return estimate.gap + z * math.sqrt(max(estimate.sv, 0.0) / m)


def with_h_prime(rec: RunRecord, h_prime: float) -> RunRecord:
    return replace(rec, h_prime=h_prime)
