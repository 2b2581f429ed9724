"""Multi-cell massive MIMO uplink channel estimation simulator.

Training-based LS and MAP/MMSE estimation, blind MAP estimation from the
SVD of the uplink data, semi-blind MAP estimation with pilot-aware
subspace-projection initialization, a genie-aided bound, and Monte-Carlo
evaluation of subspace angles and matched-filter / zero-forcing downlink
rates.
"""

from .scenario import (CellLayout, PilotBook, Scenario, allocate_pilots,
                       build_layout, drop_users, load_scenario, slow_fading,
                       slow_fading_matrix)
from .signalmodel import (ChannelSet, ReceivedSignals, draw_channels,
                          synth_training, synth_uplink_data)
from .numerics import (LbfgsResult, OptimizerOptions, SvdResult,
                       complex_to_real, finite_diff_grad, hermitian_solve,
                       lbfgs_maximize, pseudo_inverse, real_to_complex, svd,
                       wirtinger_to_real_grad)
from .estimators import (EstimateSet, assign_permutation,
                         blind_map_estimate, blind_singular_values,
                         genie_bound_estimate, ls_all_users, ls_estimate,
                         pasp_estimate, semi_blind_estimate,
                         semi_blind_gradient, semi_blind_objective,
                         train_map_estimate, train_map_joint)
from .evaluation import (downlink_rates, empirical_cdf, mf_precoder,
                         percentile, subspace_angle, zf_precoder)
from .experiment import (ExperimentPlan, run_convergence_study,
                         run_experiment)

__version__ = "0.1.0"
