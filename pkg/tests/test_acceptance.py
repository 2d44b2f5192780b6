"""Acceptance criteria, each with its stated tolerance and runtime budget.

Every test records one PASS/FAIL line that is printed in the terminal
summary under "acceptance criteria".
"""

import math
import time

import numpy as np
import pytest

from conftest import random_instance, report
from seqsample.estimators import (ScenarioOracle, anova_decompose, anova_from_values, d_estimator, gap_a2rp,
                                  gap_srp)
from seqsample.experiments import SUMMARY_HEADER, ExperimentConfig, gap_oracle, run_experiment
from seqsample.lp import LinearProgram, lp_residuals, solve_lp, vertex_enumeration
from seqsample.model import MarginalDistribution, make_instance
from seqsample.sampling import METHODS, RngStream, draw_sample, sample_iid, sample_lhs
from seqsample.sequential import SUBLINEAR, SUPERLINEAR, Schedule, compute_cp, compute_cpq, min_sample_size

pytestmark = pytest.mark.acceptance


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start

    @property
    def ok(self):
        return self.elapsed < self.seconds


# ---------------------------------------------------------------------------
# 1. schedule constants

def test_c1_lognormal_constant():
    with Budget(1.0) as t:
        cp = compute_cp(0.191, 0.10)
    ok = abs(cp - 8.146) <= 1e-3 and t.ok
    report(1, "c_p(0.191, 0.10) = 8.146 +- 1e-3", ok, f"c_p = {cp:.9f} in {t.elapsed:.3f}s")
    assert abs(cp - 8.146) <= 1e-3
    assert t.ok


@pytest.mark.xfail(strict=True, reason="the series sum(exp(-p j^q)) evaluates to 9.686942, not 9.69945; "
                                       "see the decisions ledger")
def test_c1_power_constant():
    with Budget(1.0) as t:
        cpq = compute_cpq(4.67e-3, 1.5, 0.10)
    ok = abs(cpq - 9.69945) <= 1e-4 and t.ok
    report(1, "c_pq(4.67e-3, 1.5, 0.10) = 9.69945 +- 1e-4", ok,
           f"c_pq = {cpq:.9f} (off by {cpq - 9.69945:+.2e}) in {t.elapsed:.3f}s")
    assert abs(cpq - 9.69945) <= 1e-4
    assert t.ok


# ---------------------------------------------------------------------------
# 2. sample-size table

def test_c2_sample_size_table():
    cases = [(SUBLINEAR, 0.4039, 100), (SUBLINEAR, 0.2855, 200), (SUBLINEAR, 0.1806, 500),
             (SUPERLINEAR, 0.1971, 500)]
    with Budget(1.0) as t:
        got = [min_sample_size(1, Schedule.build(kind, dh=dh)) for kind, dh, _ in cases]
    want = [n for *_, n in cases]
    ok = got == want and t.ok
    report(2, "min_sample_size(1) reproduces (dh -> n1) table", ok, f"{got} vs {want} in {t.elapsed:.3f}s")
    assert got == want
    assert t.ok


# ---------------------------------------------------------------------------
# 3. GAP >= 0 and GAP >= D

def test_c3_estimator_inequalities():
    rng = np.random.default_rng(2024)
    pool = []
    for i in range(25):
        inst = random_instance(rng, name=f"rand{i}", d=int(rng.integers(1, 4)))
        pool.append((inst, ScenarioOracle(inst)))
    worst_gap, worst_d, bad = math.inf, math.inf, 0
    with Budget(120.0) as t:
        for case in range(1000):
            inst, oracle = pool[case % len(pool)]
            method = METHODS[case % len(METHODS)]
            n = int(rng.choice([4, 8, 12]))
            x = rng.uniform(inst.lower, inst.upper).round(3)
            sample = draw_sample(method, n, inst, RngStream(11, case, "inequality"))
            est = gap_srp(inst, x, sample, oracle.evaluator)
            d = d_estimator(inst, x, oracle.x_star, sample, oracle.evaluator)
            worst_gap = min(worst_gap, est.gap)
            worst_d = min(worst_d, est.gap - d)
            bad += (est.gap < -1e-9) or (est.gap < d - 1e-9)
    ok = bad == 0 and t.ok
    report(3, "GAP >= 0 and GAP >= D over 1000 cases", ok,
           f"violations {bad}, min GAP {worst_gap:.3g}, min GAP-D {worst_d:.3g}, {t.elapsed:.1f}s")
    assert bad == 0
    assert t.ok


# ---------------------------------------------------------------------------
# 4. unbiasedness of D

def test_c4_d_estimator_unbiased(newsvendor):
    inst = newsvendor
    x = np.array([6.0, 12.0, 7.0, 8.0])
    R, n = 10_000, 8
    with Budget(300.0) as t:
        oracle = ScenarioOracle(inst)
        exact_gap = oracle.gap_of(x)
        delta = oracle.f_table(x) - oracle.f_table(oracle.x_star)
        details, ok = [], True
        for method in METHODS:
            ds = np.empty(R)
            for r in range(R):
                sample = draw_sample(method, n, inst, RngStream(5, r, "unbiased"))
                ds[r] = delta[oracle_index(oracle, sample.points)].mean()
            se = ds.std(ddof=1) / math.sqrt(R)
            z = abs(ds.mean() - exact_gap) / se
            ok &= z <= 4.0
            details.append(f"{method} {z:.2f}SE")
        # spot check that the table lookup matches the public estimator
        sample = draw_sample("LHS", n, inst, RngStream(5, 0, "unbiased"))
        assert d_estimator(inst, x, oracle.x_star, sample, oracle.evaluator) == pytest.approx(
            delta[oracle_index(oracle, sample.points)].mean(), abs=1e-10)
    ok = ok and t.ok
    report(4, "mean D within 4 SE of exact gap (10^4 reps per method)", ok,
           f"G_x = {exact_gap:.4f}; {', '.join(details)}; {t.elapsed:.1f}s")
    assert ok


def oracle_index(oracle, points):
    from seqsample.model import scenario_index

    return scenario_index(oracle.inst, points)


# ---------------------------------------------------------------------------
# 5. exact variance ordering

def test_c5_exact_variance_ordering(newsvendor, capacity):
    cases = [(newsvendor, [6.0, 12.0, 7.0, 8.0]), (capacity, [7.0, 8.0])]
    with Budget(60.0) as t:
        ratios, ok = [], True
        for inst, x in cases:
            s2 = ScenarioOracle(inst).variances(np.array(x))
            ok &= s2["AV"] <= s2["IID"] + 1e-9
            ok &= s2["2I"] == s2["IID"] / 2
            ratios.append(math.sqrt(s2["AV"] / s2["2I"]))
        ok &= min(ratios) < 0.8
    ok = ok and t.ok
    report(5, "sigma2_AV <= sigma2_IID, sigma2_2I = sigma2_IID/2, some sigma_AV < 0.8 sigma_2I", ok,
           f"sigma_AV/sigma_2I = {[round(r, 4) for r in ratios]}; {t.elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------------------
# 6. LHS variance reduction

def _uniform_instance(d):
    return make_instance(name="uniform-cube", c=[0.0], q0=[1.0], W=[[-1.0]], R0=[0.0],
                         marginals=[MarginalDistribution.uniform(0.0, 1.0)] * d, upper=[1.0])


def test_c6_lhs_variance_reduction(capacity):
    R16, R8 = 2000, 5000
    with Budget(120.0) as t:
        inst = _uniform_instance(3)
        iid = np.array([sample_iid(16, inst, RngStream(3, r, "lhs-test")).points.sum(axis=1).mean()
                        for r in range(R16)])
        lhs = np.array([sample_lhs(16, inst, RngStream(3, r, "lhs-test")).points.sum(axis=1).mean()
                        for r in range(R16)])
        # one-sided 99% test of var(IID)/var(LHS) > 1 on the log scale
        crit = math.exp(2.3263478740408408 * math.sqrt(2.0 / (R16 - 1) + 2.0 / (R16 - 1)))
        ratio = iid.var(ddof=1) / lhs.var(ddof=1)
        first = ratio > crit

        oracle = ScenarioOracle(capacity)
        x = np.array([7.0, 8.0])
        table = oracle.f_table(x)
        mean_f = float(table @ oracle.probs)
        sigma2_f = float(((table - mean_f) ** 2) @ oracle.probs)
        means = np.array([table[oracle_index(oracle, sample_lhs(8, capacity, RngStream(4, r, "owen")).points)].mean()
                          for r in range(R8)])
        emp = means.var(ddof=1)
        bound = sigma2_f / 7.0 * (1.0 + 3.0 * math.sqrt(2.0 / (R8 - 1)))
        second = emp <= bound
    ok = first and second and t.ok
    report(6, "LHS beats IID on an additive function; Owen bound at n=8", ok,
           f"var ratio {ratio:.1f} > {crit:.3f}; Var(LHS mean) {emp:.4f} <= {bound:.4f}; {t.elapsed:.1f}s")
    assert first
    assert second
    assert t.ok


# ---------------------------------------------------------------------------
# 7. sequential coverage

def test_c7_sequential_coverage(capacity, tmp_path):
    with Budget(600.0) as t:
        oracle = gap_oracle(capacity)
        config = ExperimentConfig(capacity, Schedule.build(n1=20), seed=12345)
        result = run_experiment(config, 300, tmp_path, oracle=oracle)
    header = (tmp_path / "table4.csv").read_text().splitlines()[0].split(",")
    rows = {r.method: r for r in result.summary}
    ok = (header == list(SUMMARY_HEADER) and set(rows) == set(METHODS)
          and all(r.coverage >= 0.85 and r.cap_outs == 0 and math.isfinite(r.T_mean) for r in rows.values())
          and t.ok)
    detail = "; ".join(f"{m} cov {r.coverage:.3f} T {r.T_mean:.2f} caps {r.cap_outs}" for m, r in rows.items())
    report(7, "A2RP coverage >= 0.85 with zero cap-outs (300 reps)", ok, f"{detail}; {t.elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 8. A2RP is more conservative than SRP

def test_c8_a2rp_conservatism(capacity):
    R, n = 10_000, 8
    x = np.array([7.0, 8.0])
    with Budget(180.0) as t:
        ev = ScenarioOracle(capacity).evaluator
        srp = np.empty(R)
        a2rp = np.empty(R)
        for r in range(R):
            srp[r] = gap_srp(capacity, x, sample_iid(n, capacity, RngStream(8, r, "assess")), ev).gap
            a2rp[r] = gap_a2rp(capacity, x, sample_iid(n // 2, capacity, RngStream(8, r, "assess-1")),
                               sample_iid(n // 2, capacity, RngStream(8, r, "assess-2")), ev).gap
    ok = a2rp.mean() >= srp.mean() and t.ok
    report(8, "mean A2RP GAP >= mean SRP GAP at equal n (10^4 reps)", ok,
           f"A2RP {a2rp.mean():.4f} vs SRP {srp.mean():.4f}; {t.elapsed:.0f}s")
    assert a2rp.mean() >= srp.mean()
    assert t.ok


# ---------------------------------------------------------------------------
# 9. ANOVA oracle

def _two_point_product_instance():
    # f(x, xi) = -x + |xi_1 + xi_2| with x fixed at 1; on {-1, 1}^2 this equals 1 + xi_1 xi_2 - x
    two = MarginalDistribution.discrete([-1.0, 1.0], [0.5, 0.5])
    return make_instance(name="product", c=[-1.0], q0=[1.0], W=[[-1.0], [-1.0]], R0=[0.0, 0.0],
                         marginals=[two, two], lower=[1.0], upper=[1.0],
                         maps=[("R", 0, [-1.0, -1.0]), ("R", 1, [1.0, 1.0])])


def test_c9_anova_oracle(newsvendor):
    eps, eps_prime = 1.5, 0.25
    with Budget(10.0) as t:
        add = anova_decompose(newsvendor, np.array([6.0, 12.0, 7.0, 8.0]))
        prod = anova_decompose(_two_point_product_instance(), np.array([1.0]))
        table = anova_from_values(np.array([[1.0, -1.0], [-1.0, 1.0]]), [np.array([0.5, 0.5])] * 2)
    ok = (abs(add.m) <= 1e-9 and abs(add.M) <= 1e-9 and prod.m == 1.0 and prod.M == 1.0
          and table.m == 1.0 and table.M == 1.0
          and add.eligible(eps, eps_prime) and not prod.eligible(eps, eps_prime)
          and prod.eligible(2.5, 0.49) and t.ok)
    report(9, "ANOVA residual range and eligibility", ok,
           f"additive m={add.m:.2g} M={add.M:.2g}; product m={prod.m} M={prod.M}; {t.elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------------------
# 10. determinism across parallel degrees

def test_c10_parallel_determinism(tmp_path):
    from seqsample.cli import main

    args = ["experiment", "--instance", "capacity4.inst", "--n1", "20", "--replications", "24", "--seed", "99",
            "--calibration-reps", "6"]
    with Budget(300.0) as t:
        codes = [main(args + ["--jobs", str(j), "--outdir", str(tmp_path / f"jobs{j}")]) for j in (1, 8)]
    files = sorted(p.relative_to(tmp_path / "jobs1") for p in (tmp_path / "jobs1").rglob("*.csv"))
    same = files and all((tmp_path / "jobs1" / f).read_bytes() == (tmp_path / "jobs8" / f).read_bytes() for f in files)
    ok = codes == [0, 0] and bool(same) and t.ok
    report(10, "experiment output identical at --jobs 1 and 8", ok,
           f"{len(files)} CSV files compared, exit codes {codes}; {t.elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 11. LP kernel

def _random_lp(rng):
    """Bounded random LP: the first row has positive coefficients and caps every variable."""
    m, n = 6, 9
    A = rng.normal(size=(m, n)).round(3)
    A[0] = np.abs(A[0]) + 0.1
    senses = ["<="] + list(rng.choice(["<=", ">=", "="], size=m - 1, p=[0.6, 0.3, 0.1]))
    # most problems are built around a feasible point; the rest get random right-hand sides
    if rng.random() < 0.7:
        x0 = rng.uniform(0.0, 0.5, size=n)
        slack = rng.uniform(0.0, 1.0, size=m) * np.select([np.array(senses) == "<=", np.array(senses) == ">="],
                                                          [1.0, -1.0], 0.0)
        rhs = A @ x0 + slack
    else:
        rhs = rng.normal(size=m) * 3
    rhs[0] = abs(rhs[0]) + 5
    upper = np.where(rng.random(n) < 0.2, rng.uniform(0.5, 2.0, size=n), np.inf)
    return LinearProgram.from_dense(rng.normal(size=n), A, rhs, senses, np.zeros(n), upper,
                                    maximize=bool(rng.random() < 0.3))


def test_c11_lp_kernel():
    rng = np.random.default_rng(11)
    mismatches, residual_failures, statuses = 0, 0, {}
    with Budget(60.0) as t:
        for _ in range(200):
            lp = _random_lp(rng)
            sol = solve_lp(lp)
            ref_status, ref_obj = vertex_enumeration(lp)
            statuses[sol.status] = statuses.get(sol.status, 0) + 1
            if sol.status != ref_status:
                mismatches += 1
            elif sol.optimal:
                mismatches += abs(sol.objective - ref_obj) > 1e-8 * max(1.0, abs(ref_obj))
                residual_failures += not lp_residuals(lp, sol).ok(1e-7)
    ok = mismatches == 0 and residual_failures == 0 and t.ok
    report(11, "simplex matches vertex enumeration on 200 LPs", ok,
           f"mismatches {mismatches}, residual failures {residual_failures}, statuses {statuses}; {t.elapsed:.1f}s")
    assert ok
