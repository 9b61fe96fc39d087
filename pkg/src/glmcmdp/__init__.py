"""No-regret learning in contextual MDPs with generalized linear transition models."""

from .agents import AgentConfig, GlmOrlAgent, GlmRlsviAgent, PlanOutput, orl_plan, rlsvi_plan
from .env import (
    CmdpTruth,
    ContextualMdp,
    EnvConfig,
    exact_values,
    generate_benchmark,
    generate_hard_instance,
    realize_mdp,
    rollout,
    sample_context,
)
from .estimator import (
    ColumnSimplex,
    ConversionState,
    OnsState,
    RewardEstState,
    RowBall,
    confidence_radius,
    conversion_confidence,
    conversion_update,
    ons_update,
    reward_ci,
    reward_update,
    transition_ci,
)
from .harness import ExperimentConfig, compute_metrics, emit_results, run_experiment, run_single, windowed_average
from .linkfn import LinkFunction, convexity_params, phi_gradient, phi_value, predict_distribution

__version__ = "0.1.0"
