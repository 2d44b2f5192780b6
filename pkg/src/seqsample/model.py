"""Two-stage stochastic linear programs with fixed recourse.

An instance is

    min  c x + E[h(x, xi)]   s.t.  A x (<=,>=,=) b,  lower <= x <= upper
    h(x, xi) = min { q(xi) y : W y <= R(xi) - T(xi) x, y >= 0 }

where every random entry of q, R and T is an affine function of the
independent components of ``xi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

SENSES = ("<=", ">=", "=")
TARGETS = ("q", "R", "T")


class InstanceError(ValueError):
    """Raised for malformed or invalid instance data."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class MarginalDistribution:
    """Distribution of one component of xi: finite discrete or bounded uniform."""

    kind: str
    values: np.ndarray = field(default_factory=lambda: np.empty(0))
    probs: np.ndarray = field(default_factory=lambda: np.empty(0))
    lo: float = math.nan
    hi: float = math.nan

    @classmethod
    def discrete(cls, values, probs):
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if values.ndim != 1 or values.shape != probs.shape or values.size == 0:
            raise InstanceError("discrete marginal needs matching nonempty value/probability lists")
        if not np.all(np.isfinite(values)):
            raise InstanceError("discrete values must be finite (bounded support)")
        if np.any(np.diff(values) <= 0):
            raise InstanceError("discrete values must be strictly increasing")
        if np.any(probs <= 0):
            raise InstanceError("discrete probabilities must be positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise InstanceError(f"marginal probabilities sum ≠ 1 (got {probs.sum()!r})")
        values.setflags(write=False)
        probs.setflags(write=False)
        return cls("discrete", values, probs, float(values[0]), float(values[-1]))

    @classmethod
    def uniform(cls, lo, hi):
        lo, hi = float(lo), float(hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise InstanceError("uniform marginal needs a bounded support")
        if not lo < hi:
            raise InstanceError(f"uniform marginal needs lo < hi (got {lo!r}, {hi!r})")
        return cls("uniform", lo=lo, hi=hi)

    @property
    def is_discrete(self):
        return self.kind == "discrete"

    @cached_property
    def cdf_points(self):
        # cumulative probabilities; the last one is pinned to exactly 1
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        cum.setflags(write=False)
        return cum

    def ppf_index(self, u):
        """Support index of the right-continuous inverse CDF (discrete only)."""
        idx = np.searchsorted(self.cdf_points, u, side="right")
        return np.minimum(idx, self.values.size - 1)

    def ppf(self, u):
        """Inverse CDF, vectorized.

        Discrete marginals use ``min{v : F(v) > u}`` so that ``u`` exactly at a
        CDF jump maps to the next support point. Values of ``u`` equal to 1
        (possible for antithetic complements) map to the top of the support.
        """
        u = np.asarray(u, dtype=float)
        if self.is_discrete:
            return self.values[self.ppf_index(u)]
        return self.lo + (self.hi - self.lo) * u

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        if self.is_discrete:
            idx = np.searchsorted(self.values, v, side="right")
            return np.where(idx > 0, self.cdf_points[np.maximum(idx - 1, 0)], 0.0)
        return np.clip((v - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def mean(self):
        if self.is_discrete:
            return float(self.values @ self.probs)
        return 0.5 * (self.lo + self.hi)

    def var(self):
        if self.is_discrete:
            mu = self.mean()
            return float(((self.values - mu) ** 2) @ self.probs)
        return (self.hi - self.lo) ** 2 / 12.0


@dataclass(frozen=True)
class AffineMap:
    """Adds ``sum_j coeffs[j] * xi[j]`` to one entry of q, R or T.

    ``index`` is an int for q (column) and R (row), and a (row, column) pair
    for T. Several maps may target the same entry; their effects add up.
    """

    target: str
    index: int | tuple[int, int]
    coeffs: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class TwoStageLP:
    name: str
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    W: np.ndarray
    q0: np.ndarray
    R0: np.ndarray
    T0: np.ndarray
    maps: tuple[AffineMap, ...]
    marginals: tuple[MarginalDistribution, ...]
    declared_bound: float | None = None

    def __post_init__(self):
        for arr in (self.c, self.A, self.b, self.lower, self.upper, self.W, self.q0, self.R0, self.T0):
            arr.setflags(write=False)
        validate(self)

    @property
    def n1(self):
        return self.c.size

    @property
    def m1(self):
        return self.b.size

    @property
    def n2(self):
        return self.q0.size

    @property
    def m2(self):
        return self.R0.size

    @property
    def d(self):
        return len(self.marginals)

    @property
    def all_discrete(self):
        return all(m.is_discrete for m in self.marginals)

    @cached_property
    def gamma_q(self):
        g = np.zeros((self.n2, self.d))
        for mp in self.maps:
            if mp.target == "q":
                g[mp.index] += mp.coeffs
        return g

    @cached_property
    def gamma_R(self):
        g = np.zeros((self.m2, self.d))
        for mp in self.maps:
            if mp.target == "R":
                g[mp.index] += mp.coeffs
        return g

    @cached_property
    def gamma_T(self):
        # shape (m2, n1, d)
        g = np.zeros((self.m2, self.n1, self.d))
        for mp in self.maps:
            if mp.target == "T":
                i, j = mp.index
                g[i, j] += mp.coeffs
        return g

    @cached_property
    def support_bounds(self):
        lo = np.array([m.lo for m in self.marginals])
        hi = np.array([m.hi for m in self.marginals])
        return lo, hi


def validate(inst: TwoStageLP):
    n1, m1 = inst.c.size, inst.b.size
    n2, m2 = inst.q0.size, inst.R0.size
    if inst.c.ndim != 1 or n1 == 0:
        raise InstanceError("first-stage cost vector c must be a nonempty vector")
    if inst.A.shape != (m1, n1):
        raise InstanceError(f"dimension mismatch: A is {inst.A.shape}, expected ({m1}, {n1})")
    if len(inst.senses) != m1 or any(s not in SENSES for s in inst.senses):
        raise InstanceError("need one sense (<=, >=, =) per first-stage row")
    if inst.lower.shape != (n1,) or inst.upper.shape != (n1,):
        raise InstanceError(f"dimension mismatch: bounds must have {n1} entries")
    if not (np.all(np.isfinite(inst.lower)) and np.all(np.isfinite(inst.upper))):
        raise InstanceError("first-stage variables need finite lower and upper bounds (X must be bounded)")
    if np.any(inst.lower > inst.upper):
        raise InstanceError("first-stage lower bound exceeds upper bound")
    if n2 == 0 or m2 == 0:
        raise InstanceError("recourse needs at least one variable and one row")
    if inst.W.shape != (m2, n2):
        raise InstanceError(f"dimension mismatch: W is {inst.W.shape}, expected ({m2}, {n2})")
    if inst.T0.shape != (m2, n1):
        raise InstanceError(f"dimension mismatch: T0 is {inst.T0.shape}, expected ({m2}, {n1})")
    if len(inst.marginals) < 1:
        raise InstanceError("d_ξ ≥ 1 required (empty marginals list)")
    d = len(inst.marginals)
    for mp in inst.maps:
        if mp.target not in TARGETS:
            raise InstanceError(f"affine map target must be q, R or T (got {mp.target!r})")
        if len(mp.coeffs) != d:
            raise InstanceError(f"affine map has {len(mp.coeffs)} coefficients, expected d_ξ = {d}")
        if mp.target == "q" and not (isinstance(mp.index, int) and 0 <= mp.index < n2):
            raise InstanceError(f"q index {mp.index!r} out of range")
        if mp.target == "R" and not (isinstance(mp.index, int) and 0 <= mp.index < m2):
            raise InstanceError(f"R index {mp.index!r} out of range")
        if mp.target == "T":
            ok = isinstance(mp.index, tuple) and len(mp.index) == 2
            if not ok or not (0 <= mp.index[0] < m2 and 0 <= mp.index[1] < n1):
                raise InstanceError(f"T index {mp.index!r} out of range")
    for arr in (inst.c, inst.A, inst.b, inst.W, inst.q0, inst.R0, inst.T0):
        if not np.all(np.isfinite(arr)):
            raise InstanceError("instance data must be finite")
    if inst.declared_bound is not None and not inst.declared_bound > 0:
        raise InstanceError("declared bound C must be positive")


def make_instance(*, name, c, q0, W, R0, marginals, A=None, b=None, senses=None,
                  lower=None, upper=None, T0=None, maps=(), declared_bound=None):
    """Convenience constructor with defaults for the optional pieces."""
    c = np.asarray(c, dtype=float).ravel()
    n1 = c.size
    W = np.atleast_2d(np.asarray(W, dtype=float))
    A = np.zeros((0, n1)) if A is None else np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, n1)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()
    senses = tuple(senses) if senses is not None else ("<=",) * b.size
    lower = np.zeros(n1) if lower is None else np.broadcast_to(np.asarray(lower, float), (n1,)).copy()
    upper = np.asarray(upper, dtype=float)
    upper = np.broadcast_to(upper, (n1,)).copy()
    T0 = np.zeros((W.shape[0], n1)) if T0 is None else np.asarray(T0, dtype=float).reshape(W.shape[0], n1)
    fixed = []
    for mp in maps:
        if not isinstance(mp, AffineMap):
            target, index, coeffs = mp
            mp = AffineMap(target, tuple(index) if target == "T" else int(index), tuple(float(v) for v in coeffs))
        fixed.append(mp)
    return TwoStageLP(
        name=name, c=c, A=A, b=b, senses=senses, lower=lower, upper=upper, W=W,
        q0=np.asarray(q0, dtype=float).ravel(), R0=np.asarray(R0, dtype=float).ravel(), T0=T0,
        maps=tuple(fixed), marginals=tuple(marginals),
        declared_bound=None if declared_bound is None else float(declared_bound),
    )


# ---------------------------------------------------------------------------
# realization

def check_support(inst: TwoStageLP, xi):
    lo, hi = inst.support_bounds
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != inst.d:
        raise ValueError(f"xi has {xi.shape[-1]} components, instance has d_ξ = {inst.d}")
    bad = (xi < lo) | (xi > hi)
    if np.any(bad):
        j = int(np.argwhere(bad)[0][-1])
        raise ValueError(f"xi component {j} outside its marginal support [{lo[j]}, {hi[j]}]")


def realize(inst: TwoStageLP, xi):
    """Return (q, R, T) for one realization ``xi``."""
    xi = np.asarray(xi, dtype=float)
    check_support(inst, xi)
    q = inst.q0 + inst.gamma_q @ xi
    R = inst.R0 + inst.gamma_R @ xi
    T = inst.T0 + inst.gamma_T @ xi
    return q, R, T


def realize_many(inst: TwoStageLP, points):
    """Vectorized ``realize`` over the rows of ``points``: shapes (n,n2), (n,m2), (n,m2,n1)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    check_support(inst, points)
    q = inst.q0 + points @ inst.gamma_q.T
    R = inst.R0 + points @ inst.gamma_R.T
    T = inst.T0 + np.einsum("ijk,nk->nij", inst.gamma_T, points)
    return q, R, T


# ---------------------------------------------------------------------------
# enumeration

DEFAULT_CAP = 10_000


def scenario_count(inst: TwoStageLP):
    if not inst.all_discrete:
        return math.inf
    return math.prod(m.values.size for m in inst.marginals)


def scenario_grid(inst: TwoStageLP, cap=DEFAULT_CAP):
    """All scenarios as arrays ``(points, probs)`` in C order (last component fastest)."""
    if not inst.all_discrete:
        raise ValueError("scenario enumeration needs finite-discrete marginals (continuous marginal present)")
    count = scenario_count(inst)
    if count > cap:
        raise ValueError(f"cap exceeded ({count} > {cap})")
    grids = np.meshgrid(*[m.values for m in inst.marginals], indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    pgrids = np.meshgrid(*[m.probs for m in inst.marginals], indexing="ij")
    probs = np.prod(np.stack([g.ravel() for g in pgrids], axis=1), axis=1)
    return points, probs


def enumerate_scenarios(inst: TwoStageLP, cap=DEFAULT_CAP):
    """List of ``(xi, probability)`` over the Cartesian product of the supports."""
    points, probs = scenario_grid(inst, cap)
    return [(points[i], float(probs[i])) for i in range(points.shape[0])]


def scenario_index(inst: TwoStageLP, points):
    """Flat index into ``scenario_grid`` of each row of ``points`` (discrete only)."""
    points = np.atleast_2d(points)
    idx = []
    for j, m in enumerate(inst.marginals):
        k = np.searchsorted(m.values, points[:, j])
        k = np.minimum(k, m.values.size - 1)
        if not np.array_equal(m.values[k], points[:, j]):
            raise ValueError(f"component {j} has values outside the discrete support")
        idx.append(k)
    return np.ravel_multi_index(idx, [m.values.size for m in inst.marginals])


# ---------------------------------------------------------------------------
# structural checks

VERIFIED_MONOTONE = "verified-monotone"
VERIFIED_ADDITIVE = "verified-additive"
UNVERIFIED = "unverified"


@dataclass(frozen=True)
class ComponentEvidence:
    component: int
    direction: str          # "nonincreasing", "nondecreasing", "constant" or "mixed"
    blocks: tuple[int, ...]  # recourse blocks the component touches
    note: str = ""


@dataclass(frozen=True)
class MonotonicityReport:
    verdict: str
    components: tuple[ComponentEvidence, ...]
    fixed_recourse: bool = True
    inequality_form: bool = True
    n_blocks: int = 1

    @property
    def monotone(self):
        return self.verdict == VERIFIED_MONOTONE

    @property
    def additive(self):
        return self.verdict == VERIFIED_ADDITIVE


def recourse_blocks(W):
    """Connected components of the row/column incidence graph of W.

    Returns (row_block, col_block) label arrays. Columns with no nonzero get
    their own block.
    """
    m2, n2 = W.shape
    parent = list(range(m2 + n2))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in zip(*np.nonzero(W)):
        ra, rb = find(int(i)), find(m2 + int(j))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = [find(a) for a in range(m2 + n2)]
    labels = {r: k for k, r in enumerate(dict.fromkeys(roots))}
    lab = np.array([labels[r] for r in roots])
    return lab[:m2], lab[m2:]


def _sign_set(values):
    s = set(np.sign(values[np.abs(values) > 0]).astype(int).tolist())
    return s


def check_monotone_structure(inst: TwoStageLP) -> MonotonicityReport:
    """Sufficient-condition check for monotone or additive dependence on xi.

    Second-stage constraints are always ``W y <= R - T x`` with fixed W and
    y >= 0, so h decreases when a right-hand side grows and increases when a
    cost entry grows. A component is monotone when all of its R, T and q
    coefficients push h the same way. T coefficients only count when x >= 0
    on all of X. A monotone instance is reported as additive when every
    recourse block (connected piece of W) is driven by at most one component.
    Any component with conflicting signs makes the verdict ``unverified``,
    which does not mean non-monotone.
    """
    row_block, col_block = recourse_blocks(inst.W)
    n_blocks = int(max(row_block.max(initial=-1), col_block.max(initial=-1)) + 1)
    x_nonneg = bool(np.all(inst.lower >= 0))
    evidence = []
    block_drivers: dict[int, set[int]] = {}
    for j in range(inst.d):
        gR = inst.gamma_R[:, j]
        gT = inst.gamma_T[:, :, j]
        gq = inst.gamma_q[:, j]
        blocks = set(row_block[np.abs(gR) > 0].tolist())
        blocks |= set(row_block[np.any(np.abs(gT) > 0, axis=1)].tolist())
        blocks |= set(col_block[np.abs(gq) > 0].tolist())
        for blk in blocks:
            block_drivers.setdefault(blk, set()).add(j)
        # +1 means h nondecreasing in xi_j, -1 nonincreasing
        effects = set()
        effects |= {-s for s in _sign_set(gR)}
        note = ""
        if np.any(gT != 0):
            if x_nonneg:
                effects |= _sign_set(gT.ravel())
            else:
                effects |= {-1, 1}
                note = "T coefficients with x not sign-restricted"
        effects |= _sign_set(gq)
        if not effects:
            direction = "constant"
        elif effects == {1}:
            direction = "nondecreasing"
        elif effects == {-1}:
            direction = "nonincreasing"
        else:
            direction = "mixed"
            note = note or "coefficients push the recourse value in opposite directions"
        evidence.append(ComponentEvidence(j, direction, tuple(sorted(blocks)), note))

    if not inst.maps:
        verdict = VERIFIED_ADDITIVE
    elif any(e.direction == "mixed" for e in evidence):
        verdict = UNVERIFIED
    elif all(len(v) <= 1 for v in block_drivers.values()):
        verdict = VERIFIED_ADDITIVE
    else:
        verdict = VERIFIED_MONOTONE
    return MonotonicityReport(verdict, tuple(evidence), n_blocks=n_blocks)


# ---------------------------------------------------------------------------
# file format

def _floats(text, line, what):
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise InstanceError(f"cannot parse numbers in {what!r}", line) from None


def _parse_marginal(text, line):
    parts = text.split(None, 1)
    if not parts:
        raise InstanceError("empty marginal line", line)
    kind = parts[0]
    rest = parts[1] if len(parts) > 1 else ""
    if kind == "discrete":
        values, probs = [], []
        for item in rest.replace(" ", "").split(","):
            if not item:
                continue
            try:
                v, p = item.split(":")
                values.append(float(v))
                probs.append(float(p))
            except ValueError:
                raise InstanceError(f"bad discrete item {item!r} (want value:prob)", line) from None
        try:
            return MarginalDistribution.discrete(values, probs)
        except InstanceError as err:
            raise InstanceError(str(err), line) from None
    if kind == "uniform":
        nums = _floats(rest, line, "uniform")
        if len(nums) != 2:
            raise InstanceError("uniform needs exactly 'lo hi'", line)
        try:
            return MarginalDistribution.uniform(*nums)
        except InstanceError as err:
            raise InstanceError(str(err), line) from None
    raise InstanceError(f"unknown marginal kind {kind!r}", line)


def _parse_map(text, line):
    fields = {}
    for tok in text.split():
        if "=" not in tok:
            raise InstanceError(f"bad affine map token {tok!r} (want key=value)", line)
        k, v = tok.split("=", 1)
        fields[k] = v
    if set(fields) != {"target", "index", "coeffs"}:
        raise InstanceError("affine map needs target=, index= and coeffs=", line)
    target = fields["target"]
    if target not in TARGETS:
        raise InstanceError(f"affine map target must be q, R or T (got {target!r})", line)
    try:
        idx = [int(t) for t in fields["index"].split(",")]
    except ValueError:
        raise InstanceError(f"bad index {fields['index']!r}", line) from None
    if (target == "T") != (len(idx) == 2) or len(idx) not in (1, 2):
        raise InstanceError("T maps take index=row,col; q and R maps take a single index", line)
    coeffs = tuple(_floats(fields["coeffs"], line, "coeffs"))
    return AffineMap(target, tuple(idx) if target == "T" else idx[0], coeffs)


def parse_instance(text, source="<string>"):
    sections = {"meta": [], "first-stage": [], "recourse": [], "random": [], "marginals": []}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in sections:
                raise InstanceError(f"unknown section [{current}]", lineno)
            continue
        if current is None:
            raise InstanceError("content before the first section header", lineno)
        sections[current].append((lineno, line))

    meta = {}
    for lineno, line in sections["meta"]:
        if "=" not in line:
            raise InstanceError("meta lines are key = value", lineno)
        k, v = (s.strip() for s in line.split("=", 1))
        meta[k] = (lineno, v)

    def keyed(section):
        out = []
        for lineno, line in sections[section]:
            if "=" not in line:
                raise InstanceError(f"[{section}] lines are key = values", lineno)
            k, v = (s.strip() for s in line.split("=", 1))
            out.append((lineno, k, v))
        return out

    c = lower = upper = None
    rows, senses, rhs = [], [], []
    for lineno, k, v in keyed("first-stage"):
        if k == "c":
            c = _floats(v, lineno, k)
        elif k == "lower":
            lower = _floats(v, lineno, k)
        elif k == "upper":
            upper = _floats(v, lineno, k)
        elif k == "row":
            toks = v.split()
            sense_pos = [i for i, t in enumerate(toks) if t in SENSES]
            if len(sense_pos) != 1 or sense_pos[0] != len(toks) - 2:
                raise InstanceError("row = a_1 ... a_n <sense> b", lineno)
            rows.append((lineno, _floats(" ".join(toks[:-2]), lineno, k)))
            senses.append(toks[-2])
            rhs.extend(_floats(toks[-1], lineno, k))
        else:
            raise InstanceError(f"unknown [first-stage] key {k!r}", lineno)
    if c is None:
        raise InstanceError(f"{source}: [first-stage] needs c")
    n1 = len(c)
    for lineno, r in rows:
        if len(r) != n1:
            raise InstanceError(f"dimension mismatch: row has {len(r)} coefficients, c has {n1}", lineno)
    if lower is None or upper is None:
        raise InstanceError(f"{source}: [first-stage] needs finite lower and upper bounds")
    if len(lower) != n1 or len(upper) != n1:
        raise InstanceError(f"dimension mismatch: bounds need {n1} entries")

    q0 = R0 = None
    W, T0 = [], []
    for lineno, k, v in keyed("recourse"):
        vals = _floats(v, lineno, k)
        if k == "q0":
            q0 = vals
        elif k == "R0":
            R0 = vals
        elif k == "W":
            W.append((lineno, vals))
        elif k == "T0":
            T0.append((lineno, vals))
        else:
            raise InstanceError(f"unknown [recourse] key {k!r}", lineno)
    if q0 is None or R0 is None or not W:
        raise InstanceError(f"{source}: [recourse] needs q0, W rows and R0")
    for lineno, r in W:
        if len(r) != len(q0):
            raise InstanceError(f"dimension mismatch: W row has {len(r)} entries, q0 has {len(q0)}", lineno)
    if len(R0) != len(W):
        raise InstanceError(f"dimension mismatch: R0 has {len(R0)} entries, W has {len(W)} rows")
    if T0 and len(T0) != len(W):
        raise InstanceError(f"dimension mismatch: T0 has {len(T0)} rows, W has {len(W)}")
    for lineno, r in T0:
        if len(r) != n1:
            raise InstanceError(f"dimension mismatch: T0 row has {len(r)} entries, c has {n1}", lineno)

    maps = tuple(_parse_map(line, lineno) for lineno, line in sections["random"])
    marginals = tuple(_parse_marginal(line, lineno) for lineno, line in sections["marginals"])

    bound = None
    if "bound" in meta:
        lineno, v = meta["bound"]
        bound = _floats(v, lineno, "bound")[0]
    name = meta.get("name", (0, Path(source).stem))[1]
    return TwoStageLP(
        name=name,
        c=np.array(c), A=np.array([r for _, r in rows], dtype=float).reshape(len(rows), n1),
        b=np.array(rhs, dtype=float), senses=tuple(senses),
        lower=np.array(lower), upper=np.array(upper),
        W=np.array([r for _, r in W]), q0=np.array(q0), R0=np.array(R0),
        T0=np.array([r for _, r in T0]) if T0 else np.zeros((len(W), n1)),
        maps=maps, marginals=marginals, declared_bound=bound,
    )


def load_instance(path) -> TwoStageLP:
    path = Path(path)
    if not path.exists():
        bundled = Path(__file__).parent / "data" / path.name
        if bundled.exists():
            path = bundled
        else:
            raise FileNotFoundError(f"instance file not found: {path}")
    return parse_instance(path.read_text(encoding="utf-8"), source=str(path))


def _fmt(values):
    return " ".join(repr(float(v)) for v in values)


def format_instance(inst: TwoStageLP) -> str:
    out = ["[meta]", f"name = {inst.name}"]
    if inst.declared_bound is not None:
        out.append(f"bound = {inst.declared_bound!r}")
    out += ["", "[first-stage]", f"c = {_fmt(inst.c)}", f"lower = {_fmt(inst.lower)}", f"upper = {_fmt(inst.upper)}"]
    for row, sense, rhs in zip(inst.A, inst.senses, inst.b):
        out.append(f"row = {_fmt(row)} {sense} {float(rhs)!r}")
    out += ["", "[recourse]", f"q0 = {_fmt(inst.q0)}"]
    out += [f"W = {_fmt(row)}" for row in inst.W]
    out.append(f"R0 = {_fmt(inst.R0)}")
    out += [f"T0 = {_fmt(row)}" for row in inst.T0]
    out += ["", "[random]"]
    for mp in inst.maps:
        idx = ",".join(str(i) for i in mp.index) if mp.target == "T" else str(mp.index)
        out.append(f"target={mp.target} index={idx} coeffs={','.join(repr(float(v)) for v in mp.coeffs)}")
    out += ["", "[marginals]"]
    for m in inst.marginals:
        if m.is_discrete:
            out.append("discrete " + ",".join(f"{float(v)!r}:{float(p)!r}" for v, p in zip(m.values, m.probs)))
        else:
            out.append(f"uniform {m.lo!r} {m.hi!r}")
    return "\n".join(out) + "\n"


def dump_instance(inst: TwoStageLP, path):
    Path(path).write_text(format_instance(inst), encoding="utf-8")


def instances_equal(a: TwoStageLP, b: TwoStageLP) -> bool:
    """Exact (bitwise) equality of all instance data."""
    arrays = ("c", "A", "b", "lower", "upper", "W", "q0", "R0", "T0")
    if a.name != b.name or a.senses != b.senses or a.maps != b.maps or a.declared_bound != b.declared_bound:
        return False
    if not all(np.array_equal(getattr(a, f), getattr(b, f)) for f in arrays):
        return False
    if len(a.marginals) != len(b.marginals):
        return False
    for ma, mb in zip(a.marginals, b.marginals):
        if ma.kind != mb.kind:
            return False
        if ma.is_discrete:
            if not (np.array_equal(ma.values, mb.values) and np.array_equal(ma.probs, mb.probs)):
                return False
        elif (ma.lo, ma.hi) != (mb.lo, mb.hi):
            return False
    return True


def bundled_instances():
    return sorted(p.name for p in (Path(__file__).parent / "data").glob("*.inst"))
