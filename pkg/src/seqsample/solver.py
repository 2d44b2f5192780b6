"""Extensive-form SAA solves and second-stage evaluation."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .lp import OPTIMAL, LinearProgram, LPSolution, solve_lp
from .model import TwoStageLP, realize_many
from .sampling import Sample

WEIGHT_TOL = 1e-10
SNAP_DIGITS = 12


class SolverError(RuntimeError):
    pass


class RecourseError(SolverError):
    """The second stage has no finite optimum at some (x, xi)."""


class SAAResult(NamedTuple):
    value: float
    x: np.ndarray


def build_extensive_form(inst: TwoStageLP, points, weights) -> LinearProgram:
    """Deterministic equivalent over weighted scenarios.

    Variables are ``[x, y_1, ..., y_S]``. Rows are the first-stage rows
    followed by one recourse block ``W y_s + T_s x <= R_s`` per scenario.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = np.asarray(weights, dtype=float).ravel()
    S = points.shape[0]
    if points.shape[1] != inst.d:
        raise ValueError(f"dimension mismatch: scenarios have {points.shape[1]} components, d_ξ = {inst.d}")
    if weights.shape != (S,):
        raise ValueError(f"dimension mismatch: {weights.size} weights for {S} scenarios")
    if S == 0 or np.any(weights <= 0) or abs(weights.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError("scenario weights must be positive and sum to 1")
    q, R, T = realize_many(inst, points)
    n1, n2, m1, m2 = inst.n1, inst.n2, inst.m1, inst.m2

    # first-stage block
    fr, fc = np.nonzero(inst.A)
    rows = [fr]
    cols = [fc]
    vals = [inst.A[fr, fc]]
    # W blocks
    wr, wc = np.nonzero(inst.W)
    wv = inst.W[wr, wc]
    off_r = m1 + m2 * np.arange(S)
    off_c = n1 + n2 * np.arange(S)
    rows.append((off_r[:, None] + wr[None, :]).ravel())
    cols.append((off_c[:, None] + wc[None, :]).ravel())
    vals.append(np.tile(wv, S))
    # T blocks
    s_idx, tr, tc = np.nonzero(T)
    rows.append(m1 + m2 * s_idx + tr)
    cols.append(tc)
    vals.append(T[s_idx, tr, tc])

    c = np.concatenate([inst.c, (weights[:, None] * q).ravel()])
    rhs = np.concatenate([inst.b, R.ravel()])
    senses = inst.senses + ("<=",) * (m2 * S)
    lower = np.concatenate([inst.lower, np.zeros(n2 * S)])
    upper = np.concatenate([inst.upper, np.full(n2 * S, np.inf)])
    return LinearProgram(c, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                         rhs, senses, lower, upper)


def merge_scenarios(points, weights=None):
    """Collapse repeated rows, summing their weights; rows come back sorted."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    uniq, inv = np.unique(points, axis=0, return_inverse=True)
    inv = inv.ravel()
    if weights is None:
        weights = np.full(points.shape[0], 1.0 / points.shape[0])
    merged = np.bincount(inv, weights=weights, minlength=uniq.shape[0])
    return uniq, merged


def _solve_ef(inst, points, weights) -> LPSolution:
    sol = solve_lp(build_extensive_form(inst, points, weights))
    if sol.status == "infeasible" and _first_stage_feasible(inst):
        raise RecourseError(f"instance {inst.name!r} violates relatively complete recourse: "
                            "no first-stage point admits a feasible second stage for every sampled scenario")
    if sol.status != OPTIMAL:
        raise SolverError(f"extensive form for {inst.name!r} ended with status {sol.status}")
    return sol


def _first_stage_feasible(inst):
    lp = LinearProgram.from_dense(np.zeros(inst.n1), inst.A, inst.b, inst.senses, inst.lower, inst.upper)
    return solve_lp(lp).status == OPTIMAL


def snap(x, digits=SNAP_DIGITS):
    """Round to ``digits`` significant digits.

    Refactoring the same optimal basis from different scenario sets leaves
    last-bit noise in x; rounding makes repeated vertices compare equal,
    which keeps the evaluation cache effective.
    """
    out = np.array([float(f"{v:.{digits}g}") for v in np.asarray(x, dtype=float)])
    return out + 0.0


def solve_weighted(inst: TwoStageLP, points, weights, merge=True) -> SAAResult:
    if merge:
        points, weights = merge_scenarios(points, weights)
    sol = _solve_ef(inst, points, weights)
    x = np.clip(snap(sol.x[: inst.n1]), inst.lower, inst.upper)
    return SAAResult(sol.objective, x)


def solve_saa(inst: TwoStageLP, sample: Sample | np.ndarray) -> SAAResult:
    """Optimal value and one optimizer of the equal-weight sample average problem.

    Antithetic pairs enter as two scenarios of weight 1/n each, which has the
    same optimum as averaging the pair inside the objective.
    """
    points = sample.points if isinstance(sample, Sample) else np.atleast_2d(sample)
    if points.shape[0] == 0:
        raise ValueError("empty sample")
    return solve_weighted(inst, points, None)


def optimal_face_ranges(inst: TwoStageLP, points, weights, value=None, tol=1e-7):
    """Range of each first-stage variable over the (near-)optimal face.

    A zero width in every coordinate certifies a unique first-stage optimizer.
    """
    points, weights = merge_scenarios(points, weights)
    ef = build_extensive_form(inst, points, weights)
    if value is None:
        value = _solve_ef(inst, points, weights).objective
    nz = np.flatnonzero(ef.c)
    extra = LinearProgram(
        ef.c, np.concatenate([ef.rows, np.full(nz.size, ef.n_rows)]), np.concatenate([ef.cols, nz]),
        np.concatenate([ef.vals, ef.c[nz]]), np.append(ef.rhs, value + tol * max(1.0, abs(value))),
        ef.senses + ("<=",), ef.lower, ef.upper,
    )
    out = np.empty((inst.n1, 2))
    for j in range(inst.n1):
        for side, maximize in ((0, False), (1, True)):
            obj = np.zeros(ef.n_vars)
            obj[j] = 1.0
            lp = LinearProgram(obj, extra.rows, extra.cols, extra.vals, extra.rhs, extra.senses,
                               extra.lower, extra.upper, maximize=maximize)
            sol = solve_lp(lp)
            if sol.status != OPTIMAL:
                raise SolverError(f"optimal-face probe ended with status {sol.status}")
            out[j, side] = sol.objective
    return out


# ---------------------------------------------------------------------------
# recourse evaluation

def _check_x(inst, x):
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != (inst.n1,):
        raise ValueError(f"x has {x.size} entries, instance has {inst.n1} first-stage variables")
    if np.any(x < inst.lower - 1e-9) or np.any(x > inst.upper + 1e-9):
        raise ValueError("x outside the first-stage bounds")
    return x


def _recourse(inst, x, q, R, T):
    lp = LinearProgram.from_dense(q, inst.W, R - T @ x)
    sol = solve_lp(lp)
    if sol.status == OPTIMAL:
        return sol.objective
    if sol.status == "infeasible":
        raise RecourseError(
            f"instance {inst.name!r} violates relatively complete recourse: second stage infeasible at x={x.tolist()}")
    raise RecourseError(f"instance {inst.name!r}: second stage {sol.status} at x={x.tolist()}")


def second_stage_value(inst: TwoStageLP, x, xi) -> float:
    x = _check_x(inst, x)
    q, R, T = realize_many(inst, np.atleast_2d(xi))
    return _recourse(inst, x, q[0], R[0], T[0])


def f_value(inst: TwoStageLP, x, xi) -> float:
    x = _check_x(inst, x)
    return float(inst.c @ x) + second_stage_value(inst, x, xi)


class Evaluator:
    """Memoized ``f(x, xi)`` over sample rows.

    Values are cached per (x, xi) byte key, so repeated candidates and
    repeated scenarios cost one recourse solve each.
    """

    def __init__(self, inst: TwoStageLP, max_entries: int = 2_000_000):
        self.inst = inst
        self.max_entries = max_entries
        self._cache: dict[tuple[bytes, bytes], float] = {}

    @property
    def size(self):
        return len(self._cache)

    def f(self, x, points) -> np.ndarray:
        inst = self.inst
        x = _check_x(inst, x)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        uniq, inv = np.unique(points, axis=0, return_inverse=True)
        inv = inv.ravel()
        xb = x.tobytes()
        cx = float(inst.c @ x)
        vals = np.empty(uniq.shape[0])
        missing = []
        for i, row in enumerate(uniq):
            v = self._cache.get((xb, row.tobytes()))
            if v is None:
                missing.append(i)
            else:
                vals[i] = v
        if missing:
            q, R, T = realize_many(inst, uniq[missing])
            if len(self._cache) + len(missing) > self.max_entries:
                self._cache.clear()
            for k, i in enumerate(missing):
                v = cx + _recourse(inst, x, q[k], R[k], T[k])
                vals[i] = v
                self._cache[(xb, uniq[i].tobytes())] = v
        return vals[inv]

    def diff(self, x, x_other, points) -> np.ndarray:
        """``f(x, xi) - f(x_other, xi)`` row by row."""
        return self.f(x, points) - self.f(x_other, points)
