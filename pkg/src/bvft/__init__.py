"""Model selection among candidate Q-functions from batch data, via pairwise
projected-Bellman tournaments on tabular MDPs."""

from ._kernels import BACKEND
from .baselines import FqiResult, run_fqi
from .data import (ConcentrabilityReport, DataDistribution, Dataset, admissible_mixture,
                   check_assumption1, check_assumption2, check_assumption3, check_assumption5,
                   sample_dataset, weighted_norm)
from .errors import CapacityError, NumericalError, ParameterError, ShapeError
from .functions import (FunctionClass, Partition, best_member_error, best_piecewise_approx,
                        build_partition, discretize)
from .mdp import (Policy, TabularMdp, bellman_optimality_update, greedy_policy,
                  max_time_t_weight, occupancy_at_time, policy_return, solve_q_star)
from .operators import (ProjectedUpdateResult, build_m_phi, bvft_loss,
                        empirical_projected_update, exact_projected_update)
from .tournament import (BvftConfig, BvftReport, FixedPointDiagnostic, diagnose_fixed_points,
                         mu_min_phi, run_bvft, sample_size_bound, theorem1_schedule)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BvftConfig",
    "BvftReport",
    "CapacityError",
    "ConcentrabilityReport",
    "DataDistribution",
    "Dataset",
    "FixedPointDiagnostic",
    "FqiResult",
    "FunctionClass",
    "NumericalError",
    "ParameterError",
    "Partition",
    "Policy",
    "ProjectedUpdateResult",
    "ShapeError",
    "TabularMdp",
    "admissible_mixture",
    "bellman_optimality_update",
    "best_member_error",
    "best_piecewise_approx",
    "build_m_phi",
    "build_partition",
    "bvft_loss",
    "check_assumption1",
    "check_assumption2",
    "check_assumption3",
    "check_assumption5",
    "diagnose_fixed_points",
    "discretize",
    "empirical_projected_update",
    "exact_projected_update",
    "greedy_policy",
    "max_time_t_weight",
    "mu_min_phi",
    "occupancy_at_time",
    "policy_return",
    "run_bvft",
    "run_fqi",
    "sample_dataset",
    "sample_size_bound",
    "solve_q_star",
    "theorem1_schedule",
    "weighted_norm",
]
