"""Privacy-enhanced over-the-air federated learning with client-driven power balancing."""

from .channel import (
    ChannelParams,
    GainDraw,
    expected_noise_power,
    expected_participants,
    participation_probability,
    sample_gains,
    threshold,
)
from .config import SystemConfig, from_dict, load_config
from .convergence import (
    ChannelContext,
    LearningParams,
    gamma_approx,
    step_size,
    theorem2_bound,
    weight_sum,
)
from .engine import (
    RoundTrace,
    TransmitPlan,
    aggregate,
    build_transmit_plan,
    clip_gradient,
    is_baseline_round_eps,
    local_update,
    run_training,
)
from .errors import (
    ConfigError,
    DegenerateGainError,
    EmptyRoundError,
    InfeasibleError,
    MaxItersExceededError,
    NonPositiveRadicandError,
    OracleConvergenceError,
    OtaflError,
)
from .optimizer import (
    FeasibleSet,
    OptimizerConfig,
    PowerBalanceSolution,
    baseline_rho,
    feasible_set,
    feasible_span,
    rho_gamma,
    rho_opt_idle,
    rho_opt_noisy,
    rho_opt_numeric,
    tau_eps_max,
    tau_gamma_min,
    two_stage_optimize,
    utility,
)
from .privacy import (
    PrivacyParams,
    RdpLedger,
    compose,
    gaussian_round_eps,
    renyi_divergence_oracle,
    subsampled_round_eps_bound,
    subsampled_round_eps_exact,
    theorem1_total_eps,
)
from .strategy import StrategySpec
from .tasks import certify_grad_sq_bound, make_logistic_task, make_quadratic_task

__version__ = "0.1.0"
