"""socgrad: gradient estimators for stochastic optimal control.

Compares the time-reversed BSDE (adapted) costate estimator against the
non-adapted adjoint baselines, and fine-tunes a toy diffusion model
toward a tilted target with both.
"""

from .kernels import NUMBA_ENABLED
from .sde import (
    TimeGrid,
    SdeModel,
    TrajectoryBatch,
    ZeroControl,
    NeuralControl,
    PhiGainControl,
    GaussianSampler,
    PointSampler,
    EmpiricalSampler,
    simulate_forward,
    simulate_sensitivity,
    drift_jacobian_fd,
    SimulationDivergedError,
)
from .nets import FuncApproximator, AdamState, adam_step, train_regression, net_eval, net_derivatives
from .score import (
    GaussianMixture1D,
    analytic_mixture_score,
    ism_loss,
    train_score,
    AnalyticScoreField,
    NetScoreField,
    ZeroScoreField,
    GaussianPathScore,
)
from .adjoint import (
    TerminalCost,
    quadratic_cost,
    pendulum_cost,
    tilted_cost,
    zero_cost,
    simulate_nonadapted,
    discrete_pathwise_gradient,
    pnaa_fit,
)
from .trbsde import (
    ReversedModel,
    ReversedAdjointPath,
    hamiltonian_grad_x,
    simulate_reversed,
    simulate_tr_bsde,
    solve_phi,
    SolvePhiConfig,
)
from .oracles import (
    LinearModelConfig,
    lyapunov_gain,
    tilted_mixture,
    mse_vs_oracle,
    w1_distance,
    mc_cost_map,
    LyapunovPhi,
)
from .finetune import (
    GaussianInit,
    gaussian_kl,
    init_dist_gradients,
    build_pretrained_model,
    soc_objective_eval,
    finetune_trbsde,
    finetune_adjoint_matching,
    FinetuneConfig,
    sample_terminal,
)
from .pendulum import EmpiricalInit, SupportOptConfig, optimize_support
from . import finetune, models

__version__ = "0.1.0"
