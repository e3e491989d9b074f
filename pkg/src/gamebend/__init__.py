"""Learning payoff-tensor modifications that help inexact equilibrium solvers.

The pipeline: sample normal-form games, factor each payoff tensor once, then
train a single policy that re-weights the factor components step by step so
that a fixed solver's output, mapped back onto the original game, has a
smaller equilibrium gap.
"""

from .cp import CPFactors, apply_modification, cp_decompose, reconstruct
from .env import (
    EnvState,
    EpisodeConfig,
    StepResult,
    improvement_score,
    reset,
    step,
    sweep_2x2,
)
from .games import (
    JointDistribution,
    MixedProfile,
    NormalFormGame,
    best_response,
    ce_regret,
    expected_payoff,
    marginalize,
    nash_conv,
    normalize_payoffs,
    sample_random_game,
)
from .nn import ActorCritic, EncoderMode, NetworkConfig, ParamStore, grad_check
from .ppo import PPOConfig, collect_rollouts, ppo_update, train
from .response_graph import (
    ResponseGraph,
    alpha_rank_solve,
    build_response_graph,
    stationary_distribution,
)
from .solvers import (
    Solution,
    SolverConfig,
    SolverKind,
    solve,
    solve_fictitious_play,
    solve_prd,
    solve_regret_matching,
)

__version__ = "0.1.0"
