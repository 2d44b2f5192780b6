import csv
import math

import numpy as np
import pytest

from seqsample.estimators import A2RP, ScenarioOracle
from seqsample.experiments import (SUMMARY_HEADER, TABLE6_HEADER, ApproximateGapOracle, ExperimentConfig,
                                   ExperimentError, compare_nonsequential, coverage, gap_oracle, mean_halfwidth,
                                   percent_reduction, proportion_interval, run_experiment, run_replications,
                                   summarize)
from seqsample.model import MarginalDistribution, make_instance
from seqsample.sequential import IterationRecord, RunRecord, Schedule


def record(method="IID", rep=0, x=(1.0,), gap=0.5, sv=1.0, dh=1.0, h_prime=0.5, terminated=True, k=2):
    trace = tuple(IterationRecord(j, 8, x, gap, sv, j == k and terminated) for j in range(1, k + 1))
    return RunRecord(method, A2RP, rep, 0, h_prime, dh, 2e-7, 1e-7, trace, terminated)


class TestStatistics:
    def test_all_covered(self):
        recs = [record(rep=r) for r in range(5)]
        assert coverage(recs, lambda x: 0.0) == (1.0, 0.0)

    def test_half_covered(self):
        recs = [record(rep=0, sv=1.0), record(rep=1, sv=0.0)]
        # interval tops are 1.5 and 2e-7; the true gap 1.0 lies only in the first
        p, _ = coverage(recs, lambda x: 1.0)
        assert p == 0.5

    def test_non_terminated_refused(self):
        with pytest.raises(ValueError, match="non-terminated"):
            coverage([record(terminated=False)], lambda x: 0.0)

    def test_proportion_interval(self):
        p, hw = proportion_interval(90, 100)
        assert p == 0.9
        assert hw == pytest.approx(1.6448536269514722 * math.sqrt(0.09 / 100))
        _, wilson = proportion_interval(100, 100, wilson=True)
        assert wilson > 0

    def test_mean_halfwidth(self):
        assert mean_halfwidth([2.0, 2.0, 2.0]) == (2.0, 0.0)
        assert mean_halfwidth([1.0]) == (1.0, 0.0)

    def test_percent_reduction(self):
        assert percent_reduction(2.0, 1.0) == 50.0
        assert percent_reduction(0.0, 0.0) == 0.0


class TestSummary:
    def test_identical_records(self):
        recs = [record(m, r) for r in range(3) for m in ("IID", "LHS", "2I", "AV")]
        rows = {r.method: r for r in summarize(recs, lambda x: 0.0)}
        assert rows["LHS"].ratio == 1.0 and rows["AV"].ratio == 1.0
        assert rows["IID"].ratio is None
        assert rows["IID"].T_hw == 0.0 and rows["IID"].width_hw == 0.0

    def test_width_ratio(self):
        # interval top is h * sqrt(sv) + eps with h = 1.5
        base = record("IID", sv=(2.0 / 1.5) ** 2)
        variant = record("LHS", sv=(1.0 / 1.5) ** 2)
        rows = {r.method: r for r in summarize([base, variant], lambda x: 0.0)}
        assert rows["LHS"].ratio == pytest.approx(2.0, rel=1e-6)

    def test_cap_outs_counted(self):
        recs = [record("IID", 0), record("IID", 1, terminated=False)]
        row = summarize(recs, lambda x: 0.0)[0]
        assert row.cap_outs == 1 and row.coverage == 0.5

    def test_unequal_replications(self):
        with pytest.raises(ValueError, match="mismatched"):
            summarize([record("IID", 0), record("IID", 1), record("AV", 0)], lambda x: 0.0)


class TestReplications:
    def config(self, inst, **kw):
        cfg = ExperimentConfig(inst, Schedule.build(n1=20), seed=21, calibration_reps=4, **kw)
        return cfg

    def test_single_replication(self, capacity):
        cfg = self.config(capacity)
        cfg.calibrate()
        recs = run_replications(cfg, 1)
        assert [(r.method, r.replication) for r in recs] == [(m, 0) for m in ("IID", "2I", "AV", "LHS")]

    def test_parallel_matches_serial(self, capacity):
        cfg = self.config(capacity, pairs=(("AV", A2RP), ("LHS", A2RP)))
        cfg.calibrate()
        serial = run_replications(cfg, 8, parallel=1)
        parallel = run_replications(cfg, 8, parallel=3)
        assert serial == parallel

    def test_requires_calibration(self, capacity):
        with pytest.raises(ValueError, match="calibrate first"):
            run_replications(self.config(capacity), 2)

    def test_failures_reported_with_index(self):
        # second stage is infeasible whenever xi = 2
        m = MarginalDistribution.discrete([0.0, 2.0], [0.5, 0.5])
        inst = make_instance(name="fragile", c=[1.0], q0=[1.0], W=[[1.0]], R0=[1.0], marginals=[m], upper=[1.0],
                             maps=[("R", 0, [-1.0])])
        cfg = ExperimentConfig(inst, Schedule.build(n1=8), pairs=(("IID", A2RP),), h_primes={("IID", A2RP): 0.1})
        with pytest.raises(ExperimentError, match="replication 0.*relatively complete recourse"):
            run_replications(cfg, 2)


class TestOracles:
    def test_enumerable(self, capacity):
        o = gap_oracle(capacity)
        assert isinstance(o, ScenarioOracle) and not o.approximate

    def test_approximate_fallback(self):
        m = MarginalDistribution.uniform(0.0, 10.0)
        # newsvendor with continuous demand: f = 3x - 8 min(x, d) - (x - min(x, d))
        inst = make_instance(name="nvu", c=[3.0], q0=[-8.0, -1.0], W=[[1.0, 0.0], [1.0, 1.0]], R0=[0.0, 0.0],
                             T0=[[0.0], [-1.0]], marginals=[m], upper=[10.0], maps=[("R", 0, [1.0])])
        o = gap_oracle(inst, n_ref=400, seed=1)
        assert isinstance(o, ApproximateGapOracle) and o.approximate
        # the true optimum is the 5/7 quantile of the demand
        assert o.x_ref[0] == pytest.approx(50 / 7, abs=0.3)
        assert o.gap_of(o.x_ref) == 0.0
        # exact gap at x = 0: E f(0) - E f(x*) = 0 - (3x* - 8E min - E(x - min)) with x* = 50/7
        xs = 50 / 7
        emin = xs - xs ** 2 / 20
        exact = -(3 * xs - 8 * emin - (xs - emin))
        assert o.gap_of([0.0]) == pytest.approx(exact, rel=0.05)


class TestComparison:
    def test_bias_column_and_reductions(self, newsvendor):
        x = [6.0, 12.0, 7.0, 8.0]
        oracle = ScenarioOracle(newsvendor)
        stats, rows = compare_nonsequential(newsvendor, x, 16, 400, seed=2, oracle=oracle)
        gap = oracle.gap_of(x)
        for s in stats:
            if s.quantity == "GAP":
                assert s.bias == pytest.approx(s.mean - gap, abs=1e-12)
                assert s.exact == gap
        by = {(r[2], r[4]): r for r in rows}
        # additive instance: LHS removes most of the GAP variance; AV beats paired IID on the interval
        lhs_gap = by[("GAP", "LHS")]
        assert lhs_gap[12] > 0
        assert by[("CI", "AV")][9] > 0

    def test_lhs_variance_reduction_significant(self, newsvendor):
        x = [6.0, 12.0, 7.0, 8.0]
        R = 1000
        stats, _ = compare_nonsequential(newsvendor, x, 16, R, methods=(("IID", A2RP), ("LHS", A2RP)), seed=3)
        v = {s.method: s.var for s in stats if s.quantity == "GAP"}
        crit = math.exp(2.3263478740408408 * math.sqrt(4.0 / (R - 1)))
        assert v["IID"] / v["LHS"] > crit

    def test_identical_methods_give_zero_reduction(self, capacity):
        from seqsample.experiments import MethodStats, reduction_rows

        a = MethodStats("nonsequential", "IID", A2RP, "GAP", 1.0, 2.0, 0.5, 0.5)
        b = MethodStats("nonsequential", "LHS", A2RP, "GAP", 1.0, 2.0, 0.5, 0.5)
        (row,) = reduction_rows([a, b])
        assert row[9] == row[12] == row[15] == 0.0


def test_run_experiment_outputs(tmp_path, capacity):
    cfg = ExperimentConfig(capacity, Schedule.build(n1=20), pairs=(("IID", A2RP), ("LHS", A2RP)), seed=5,
                           calibration_reps=4)
    res = run_experiment(cfg, 6, tmp_path, compare_x=[7.0, 8.0], compare_R=20)
    with open(tmp_path / "table4.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == SUMMARY_HEADER and len(rows) == 3
    with open(tmp_path / "table6.csv") as fh:
        assert tuple(next(csv.reader(fh))) == TABLE6_HEADER
    assert sorted(p.name for p in (tmp_path / "runs").iterdir()) == ["IID_A2RP.csv", "LHS_A2RP.csv"]
    assert len(res.records) == 12
    assert np.isfinite([r.T_mean for r in res.summary]).all()
