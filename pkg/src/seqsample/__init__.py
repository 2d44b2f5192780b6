"""Sequential sampling with variance reduction for two-stage stochastic linear programs."""

from .estimators import (
    ExactQuantities, GapEstimate, ScenarioOracle, anova_decompose, d_estimator, exact_quantities, gap_a2rp, gap_srp,
)
from .lp import LinearProgram, LPSolution, lp_residuals, solve_lp
from .model import (
    AffineMap, InstanceError, MarginalDistribution, MonotonicityReport, TwoStageLP, check_monotone_structure,
    dump_instance, enumerate_scenarios, load_instance, realize,
)
from .sampling import RngStream, Sample, inverse_cdf, sample_2i, sample_av, sample_iid, sample_lhs
from .sequential import (
    RunRecord, Schedule, calibrate_h_prime, compute_cp, compute_cpq, dh_from_initial_size, min_sample_size,
    nonsequential_ci, run_sequential,
)
from .solver import build_extensive_form, f_value, second_stage_value, solve_saa

__version__ = "0.1.0"
