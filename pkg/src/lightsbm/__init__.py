"""Light Schrödinger-bridge matching with a Gaussian-mixture adjusted potential."""

from .couplings import CouplingSampler, independent_pairs, minibatch_ot_pairs, paired_pairs, solve_assignment
from .io import Checkpoint, load_checkpoint, read_csv, save_checkpoint, write_csv
from .metrics import (
    MetricReport,
    bw_uvp,
    cbw_uvp,
    cbw_uvp_moments,
    dynamic_kl,
    energy_distance,
    energy_permutation_test,
)
from .oracle import GaussianEotOracle, gaussian_eot_plan, gaussian_sb_drift, grid_sinkhorn
from .potential import (
    GaussianMixturePotential,
    conditional_moments,
    conditional_plan,
    drift,
    init_potential,
    lightsb_objective,
    log_c,
    log_v,
    sample_conditional,
    sample_endpoints,
)
from .processes import PairBatch, TrajectoryBatch, euler_maruyama, refine_trajectory, sample_bridge_point, sample_reciprocal
from .trainer import TrainConfig, TrainingError, loss_gradient, matching_loss, train

__version__ = "0.1.0"
