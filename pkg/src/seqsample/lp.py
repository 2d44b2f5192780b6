"""Dense two-phase primal simplex for small and medium linear programs.

The solver works on a full tableau. Pricing is Dantzig (most negative reduced
cost) and switches to Bland's rule after a run of degenerate pivots, which
rules out cycling while keeping the pivot path fully deterministic. The final
basis is refactored with a direct solve so the reported primal and dual
vectors do not carry the accumulated tableau round-off.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
STALLED = "stalled"

PIVOT_TOL = 1e-9
COST_TOL = 1e-9
DEGENERATE_SWITCH = 50


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``min (or max) c x  s.t.  rows (<=, >=, =) rhs,  lower <= x <= upper``.

    The constraint matrix is held as coordinate triplets; duplicate entries
    add up.
    """

    c: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    rhs: np.ndarray
    senses: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    maximize: bool = False
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        n, m = self.c.size, self.rhs.size
        if len(self.senses) != m:
            raise ValueError(f"dimension mismatch: {len(self.senses)} senses for {m} rows")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError(f"dimension mismatch: bounds must have {n} entries")
        if not (self.rows.shape == self.cols.shape == self.vals.shape):
            raise ValueError("triplet arrays must have equal length")
        if self.rows.size and (self.rows.min() < 0 or self.rows.max() >= m):
            raise ValueError("row index out of range")
        if self.cols.size and (self.cols.min() < 0 or self.cols.max() >= n):
            raise ValueError("column index out of range")
        if any(s not in ("<=", ">=", "=") for s in self.senses):
            raise ValueError("row senses must be <=, >= or =")
        if np.any(self.lower > self.upper):
            raise ValueError("variable lower bound exceeds upper bound")

    @classmethod
    def from_dense(cls, c, A, rhs, senses=None, lower=None, upper=None, maximize=False):
        c = np.asarray(c, dtype=float).ravel()
        A = np.asarray(A, dtype=float).reshape(-1, c.size)
        r, k = np.nonzero(A)
        rhs = np.asarray(rhs, dtype=float).ravel()
        senses = tuple(senses) if senses is not None else ("<=",) * rhs.size
        lower = np.zeros(c.size) if lower is None else np.broadcast_to(np.asarray(lower, float), c.shape).copy()
        upper = np.full(c.size, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, float), c.shape).copy()
        return cls(c, r, k, A[r, k], rhs, senses, lower, upper, maximize)

    @property
    def n_vars(self):
        return self.c.size

    @property
    def n_rows(self):
        return self.rhs.size

    @cached_property
    def dense(self):
        A = np.zeros((self.n_rows, self.n_vars))
        np.add.at(A, (self.rows, self.cols), self.vals)
        A.setflags(write=False)
        return A


@dataclass(frozen=True, eq=False)
class LPSolution:
    status: str
    objective: float = math.nan
    x: np.ndarray = field(default_factory=lambda: np.empty(0))
    duals: np.ndarray = field(default_factory=lambda: np.empty(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.empty(0))
    iterations: int = 0

    @property
    def optimal(self):
        return self.status == OPTIMAL


class _StandardForm:
    """``min cs z  s.t.  As z = bs, z >= 0`` plus the map back to the original x."""

    def __init__(self, lp: LinearProgram):
        A = lp.dense
        m, n = A.shape
        sign = -1.0 if lp.maximize else 1.0
        c = sign * lp.c
        cols, costs, offset = [], [], 0.0
        # x = shift + sum_k coef_k * z_k over columns belonging to x
        self.owner, self.coef = [], []
        shift = np.zeros(n)
        extra_rows = []  # (column index in z, upper - lower)
        for j in range(n):
            lo, hi = float(lp.lower[j]), float(lp.upper[j])
            a = A[:, j]
            if np.isfinite(lo):
                shift[j] = lo
                cols.append(a), costs.append(c[j]), self.owner.append(j), self.coef.append(1.0)
                if np.isfinite(hi):
                    extra_rows.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                shift[j] = hi
                cols.append(-a), costs.append(-c[j]), self.owner.append(j), self.coef.append(-1.0)
            else:
                cols.append(a), costs.append(c[j]), self.owner.append(j), self.coef.append(1.0)
                cols.append(-a), costs.append(-c[j]), self.owner.append(j), self.coef.append(-1.0)
        nz = len(cols)
        Az = np.column_stack(cols) if cols else np.zeros((m, 0))
        b = lp.rhs - A @ shift
        offset = float(c @ shift)
        senses = list(lp.senses)
        if extra_rows:
            E = np.zeros((len(extra_rows), nz))
            for r, (k, width) in enumerate(extra_rows):
                E[r, k] = 1.0
            Az = np.vstack([Az, E])
            b = np.concatenate([b, [w for _, w in extra_rows]])
            senses += ["<="] * len(extra_rows)
        mt = Az.shape[0]
        n_slack = sum(s != "=" for s in senses)
        S = np.zeros((mt, n_slack))
        k = 0
        self.slack_of_row = np.full(mt, -1)
        for i, s in enumerate(senses):
            if s == "<=":
                S[i, k] = 1.0
            elif s == ">=":
                S[i, k] = -1.0
            else:
                continue
            self.slack_of_row[i] = nz + k
            k += 1
        As = np.hstack([Az, S])
        cs = np.concatenate([np.array(costs, dtype=float), np.zeros(n_slack)])
        flip = np.where(b < 0, -1.0, 1.0)
        self.A = As * flip[:, None]
        self.b = b * flip
        self.c = cs
        self.flip = flip
        self.sign = sign
        self.offset = offset
        self.shift = shift
        self.n_orig = n
        self.m_orig = m
        self.nz = nz
        self.owner = np.array(self.owner, dtype=int)
        self.coef = np.array(self.coef)

    def to_original(self, z):
        x = self.shift.copy()
        np.add.at(x, self.owner, self.coef * z[: self.nz])
        return x


def _pivot(T, r, k):
    T[r] /= T[r, k]
    col = T[:, k].copy()
    col[r] = 0.0
    rows = np.flatnonzero(np.abs(col) > 1e-12)
    if rows.size:
        T[rows] -= np.outer(col[rows], T[r])
    T[:, k] = 0.0
    T[r, k] = 1.0


def _ratio_test(T, m, k, basis, bland):
    col = T[:m, k]
    rhs = T[:m, -1]
    cand = np.flatnonzero(col > PIVOT_TOL)
    if cand.size == 0:
        return -1
    ratios = np.maximum(rhs[cand], 0.0) / col[cand]
    best = ratios.min()
    ties = cand[ratios <= best + 1e-12 * max(1.0, abs(best))]
    if ties.size == 1:
        return int(ties[0])
    if bland:
        return int(ties[np.argmin(basis[ties])])
    return int(ties[np.argmax(col[ties])])


def _simplex(T, m, basis, allowed, max_pivots):
    """Optimize the tableau whose last row holds reduced costs and -objective."""
    degenerate = 0
    pivots = 0
    while True:
        d = T[m, :-1]
        bland = degenerate >= DEGENERATE_SWITCH
        eligible = allowed & (d < -COST_TOL)
        if not eligible.any():
            return OPTIMAL, pivots
        if bland:
            k = int(np.argmax(eligible))
        else:
            k = int(np.argmin(np.where(eligible, d, np.inf)))
        r = _ratio_test(T, m, k, basis, bland)
        if r < 0:
            return UNBOUNDED, pivots
        if pivots >= max_pivots:
            return STALLED, pivots
        degenerate = degenerate + 1 if T[r, -1] <= PIVOT_TOL else 0
        _pivot(T, r, k)
        basis[r] = k
        pivots += 1


def solve_lp(lp: LinearProgram, max_pivots: int | None = None) -> LPSolution:
    """Solve ``lp``; the result is a pure function of the input."""
    sf = _StandardForm(lp)
    A, b, c = sf.A, sf.b, sf.c
    m, n = A.shape
    if max_pivots is None:
        max_pivots = 50 * (m + n) + 1000

    # rows whose slack has +1 after flipping can start with the slack basic
    basis = np.full(m, -1)
    for i in range(m):
        s = sf.slack_of_row[i]
        if s >= 0 and A[i, s] == 1.0:
            basis[i] = s
    need = np.flatnonzero(basis < 0)
    n_art = need.size
    N = n + n_art
    T = np.zeros((m + 1, N + 1))
    T[:m, :n] = A
    T[:m, -1] = b
    for a, i in enumerate(need):
        T[i, n + a] = 1.0
        basis[i] = n + a
    pivots = 0
    row_ids = np.arange(m)

    if n_art:
        T[m, :] = -T[need].sum(axis=0)
        T[m, n:N] = 0.0
        allowed = np.ones(N, dtype=bool)
        status, p = _simplex(T, m, basis, allowed, max_pivots)
        pivots += p
        if status == STALLED:
            return LPSolution(STALLED, iterations=pivots)
        infeas = -T[m, -1]
        if infeas > 1e-9 * max(1.0, np.abs(b).max(initial=0.0)):
            return LPSolution(INFEASIBLE, iterations=pivots)
        # drive remaining artificials out of the basis, dropping redundant rows
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= n:
                row = T[i, :n]
                cand = np.flatnonzero(np.abs(row) > 1e-7)
                if cand.size:
                    k = int(cand[np.argmax(np.abs(row[cand]))])
                    _pivot(T, i, k)
                    basis[i] = k
                    pivots += 1
                else:
                    keep[i] = False
        if not keep.all():
            rows = np.concatenate([np.flatnonzero(keep), [m]])
            T = T[rows]
            row_ids = row_ids[keep]
            basis = basis[keep]
            A = A[keep]
            b = b[keep]
            m = int(keep.sum())
        T = np.delete(T, np.arange(n, N), axis=1)
    # phase 2 reduced costs
    T[m, :] = 0.0
    T[m, :n] = c
    cb = c[basis]
    T[m, :] -= cb @ T[:m, :]
    allowed = np.ones(n, dtype=bool)
    status, p = _simplex(T, m, basis, allowed, max_pivots - pivots)
    pivots += p
    if status != OPTIMAL:
        return LPSolution(status, iterations=pivots)

    z = np.zeros(n)
    B = A[:, basis]
    try:
        zb = np.linalg.solve(B, b)
        y = np.linalg.solve(B.T, c[basis])
    except np.linalg.LinAlgError:
        zb = T[:m, -1].copy()
        y = np.linalg.lstsq(B.T, c[basis], rcond=None)[0]
    zb[(zb < 0) & (zb > -1e-9)] = 0.0
    z[basis] = zb
    x = np.clip(sf.to_original(z), lp.lower, lp.upper)

    # duals of the original rows in the d(objective)/d(rhs) convention
    y_full = np.zeros(sf.A.shape[0])
    y_full[row_ids] = y
    y_rows = sf.sign * (y_full * sf.flip)[: sf.m_orig]
    reduced = lp.c - lp.dense.T @ y_rows
    return LPSolution(OPTIMAL, float(lp.c @ x), x, y_rows, reduced, pivots)


# ---------------------------------------------------------------------------
# verification

@dataclass(frozen=True)
class Residuals:
    primal: float
    dual: float
    complementarity: float
    duality_gap: float

    def ok(self, tol=1e-7):
        return max(self.primal, self.dual, self.complementarity, self.duality_gap) <= tol


def lp_residuals(lp: LinearProgram, sol: LPSolution) -> Residuals:
    """Primal, dual, complementary-slackness and duality-gap residuals of an optimal solution."""
    A = lp.dense
    x, y = sol.x, sol.duals
    sgn = -1.0 if lp.maximize else 1.0
    ax = A @ x
    senses = np.array(lp.senses)
    viol = np.where(senses == "<=", ax - lp.rhs, np.where(senses == ">=", lp.rhs - ax, np.abs(ax - lp.rhs)))
    bound_viol = np.maximum(lp.lower - x, x - lp.upper)
    primal = max(float(np.max(viol, initial=0.0)), float(np.max(bound_viol, initial=0.0)), 0.0)

    # work in minimization terms
    ym = sgn * y
    d = sgn * lp.c - A.T @ ym
    ysign = np.where(senses == "<=", np.maximum(ym, 0.0), np.where(senses == ">=", np.maximum(-ym, 0.0), 0.0))
    zl = np.maximum(d, 0.0)   # multiplier on lower bounds
    wu = np.maximum(-d, 0.0)  # multiplier on upper bounds
    dual = max(float(np.max(ysign, initial=0.0)),
               float(np.max(np.where(np.isfinite(lp.lower), 0.0, zl), initial=0.0)),
               float(np.max(np.where(np.isfinite(lp.upper), 0.0, wu), initial=0.0)))
    slack = lp.rhs - ax
    comp_rows = np.abs(ym * np.where(senses == "=", 0.0, slack))
    gap_lo = np.where(np.isfinite(lp.lower), x - np.where(np.isfinite(lp.lower), lp.lower, 0.0), 0.0)
    gap_hi = np.where(np.isfinite(lp.upper), np.where(np.isfinite(lp.upper), lp.upper, 0.0) - x, 0.0)
    comp = max(float(np.max(comp_rows, initial=0.0)),
               float(np.max(np.abs(zl * gap_lo), initial=0.0)),
               float(np.max(np.abs(wu * gap_hi), initial=0.0)))
    lo_term = np.where(np.isfinite(lp.lower), zl * np.where(np.isfinite(lp.lower), lp.lower, 0.0), 0.0)
    hi_term = np.where(np.isfinite(lp.upper), wu * np.where(np.isfinite(lp.upper), lp.upper, 0.0), 0.0)
    dual_obj = float(ym @ lp.rhs + lo_term.sum() - hi_term.sum())
    gap = abs(sgn * sol.objective - dual_obj)
    return Residuals(primal, dual, comp, gap)


@functools.lru_cache(maxsize=8)
def _combinations(n, m):
    return np.array(list(itertools.combinations(range(n), m)), dtype=np.intp).reshape(-1, m)


def vertex_enumeration(lp: LinearProgram, batch: int = 50000):
    """Brute-force optimum over all basic solutions of the standard form.

    Returns ``(status, objective)`` where status is optimal or infeasible.
    Only meaningful for bounded problems; intended as a test oracle on tiny LPs.
    """
    sf = _StandardForm(lp)
    A, b, c = sf.A, sf.b, sf.c
    m, n = A.shape
    best = math.inf
    combos = _combinations(n, m)
    for start in range(0, combos.shape[0], batch):
        chunk = combos[start:start + batch]
        B = A[:, chunk].transpose(1, 0, 2)  # (k, m, m)
        rhs = np.broadcast_to(b, (chunk.shape[0], m))[..., None]
        try:
            sol = np.linalg.solve(B, rhs)[..., 0]
        except np.linalg.LinAlgError:
            ok = np.abs(np.linalg.det(B)) > 1e-10
            chunk, B = chunk[ok], B[ok]
            sol = np.linalg.solve(B, rhs[ok])[..., 0]
        feas = np.all(sol >= -1e-9, axis=1)
        # guard against ill-conditioned bases
        feas &= np.abs(np.einsum("kij,kj->ki", B, sol) - b).max(axis=1) < 1e-7
        if feas.any():
            vals = (c[chunk] * sol).sum(axis=1)[feas]
            best = min(best, float(vals.min()))
    if not math.isfinite(best):
        return INFEASIBLE, math.nan
    return OPTIMAL, sf.sign * (best + sf.offset)


# ---------------------------------------------------------------------------
# export

def _term(coef, name, first):
    if coef == 0:
        return ""
    sign = "-" if coef < 0 else ("" if first else "+")
    mag = abs(coef)
    body = name if mag == 1 else f"{mag!r} {name}"
    return f"{sign} {body}".strip() if first else f" {sign} {body}"


def format_lp(lp: LinearProgram) -> str:
    """Render ``lp`` in the CPLEX LP text format."""
    names = lp.names or tuple(f"x{j}" for j in range(lp.n_vars))
    A = lp.dense
    out = ["Maximize" if lp.maximize else "Minimize"]
    obj = "".join(_term(float(v), names[j], i == 0) for i, (j, v) in enumerate((j, v) for j, v in enumerate(lp.c) if v))
    out.append(f" obj: {obj or '0 ' + names[0]}")
    out.append("Subject To")
    for i in range(lp.n_rows):
        nz = [(j, float(A[i, j])) for j in np.flatnonzero(A[i])]
        expr = "".join(_term(v, names[j], k == 0) for k, (j, v) in enumerate(nz)) or f"0 {names[0]}"
        out.append(f" r{i}: {expr} {lp.senses[i]} {float(lp.rhs[i])!r}")
    out.append("Bounds")
    for j in range(lp.n_vars):
        lo, hi = float(lp.lower[j]), float(lp.upper[j])
        if np.isfinite(lo) and np.isfinite(hi):
            out.append(f" {lo!r} <= {names[j]} <= {hi!r}")
        elif np.isfinite(lo):
            out.append(f" {names[j]} >= {lo!r}")
        elif np.isfinite(hi):
            out.append(f" -inf <= {names[j]} <= {hi!r}")
        else:
            out.append(f" {names[j]} free")
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(lp: LinearProgram, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_lp(lp))
