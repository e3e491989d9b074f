"""Inexact equilibrium solvers sharing one config and result surface.

Four families: stationary-mass ranking over the response graph, full-width
regret matching (correlating device), fictitious play, and projected
replicator dynamics.  All are deterministic given (game, config).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import response_graph as rg
from .games import (
    JointDistribution,
    MixedProfile,
    NormalFormGame,
    marginalize,
)


class SolverKind(enum.Enum):
    ALPHA_RANK = "alpha_rank"
    CE_REGRET_MATCHING = "ce"
    FICTITIOUS_PLAY = "fp"
    PRD = "prd"


@dataclass(frozen=True)
class SolverConfig:
    """Which solver to run and with what knobs.

    dt and gamma_explore only apply to PRD; alpha and m only to the
    response-graph solver.  Iteration defaults are per kind.
    """

    kind: SolverKind
    iterations: int
    dt: float = 1e-2
    gamma_explore: float = 1e-10
    alpha: float = rg.DEFAULT_ALPHA
    m: float = rg.DEFAULT_M

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.kind is SolverKind.PRD:
            if self.dt <= 0:
                raise ValueError("PRD step size must be positive")
            if self.gamma_explore <= 0:
                raise ValueError("PRD exploration mass must be positive")
        if self.kind is SolverKind.ALPHA_RANK:
            if self.alpha <= 0 or self.m <= 1:
                raise ValueError("alpha must be positive and m greater than 1")

    @classmethod
    def alpha_rank(cls, alpha: float = rg.DEFAULT_ALPHA, m: float = rg.DEFAULT_M) -> "SolverConfig":
        return cls(kind=SolverKind.ALPHA_RANK, iterations=1, alpha=alpha, m=m)

    @classmethod
    def regret_matching(cls, iterations: int = 1000) -> "SolverConfig":
        return cls(kind=SolverKind.CE_REGRET_MATCHING, iterations=iterations)

    @classmethod
    def fictitious_play(cls, iterations: int = 1000) -> "SolverConfig":
        return cls(kind=SolverKind.FICTITIOUS_PLAY, iterations=iterations)

    @classmethod
    def prd(
        cls, iterations: int = 10_000, dt: float = 1e-2, gamma_explore: float = 1e-10
    ) -> "SolverConfig":
        return cls(kind=SolverKind.PRD, iterations=iterations, dt=dt, gamma_explore=gamma_explore)


@dataclass(frozen=True)
class Solution:
    """Solver output: per-player mixtures, plus a joint for correlating solvers."""

    profile: MixedProfile
    joint: JointDistribution | None
    solver_iterations_used: int


def _pure_payoffs(payoffs_k: np.ndarray, strategies: list[np.ndarray], player: int) -> np.ndarray:
    """u[a] = expected payoff of pure action a against the others' mixtures."""
    if len(strategies) == 2:
        # matvec fast path; the tensordot loop below dominates PRD runtime
        if player == 0:
            return payoffs_k @ strategies[1]
        return strategies[0] @ payoffs_k
    table = payoffs_k
    for k in range(len(strategies) - 1, -1, -1):
        if k == player:
            continue
        table = np.tensordot(table, strategies[k], axes=([k], [0]))
    return table


def solve_fictitious_play(game: NormalFormGame, iterations: int = 1000) -> Solution:
    """Simultaneous fictitious play; returns the running average strategies.

    Everyone starts uniform; each round all players best-respond to the
    opponents' current averages at once, and the averages fold in the new
    pure responses with weight 1/(t+1).
    """
    counts = game.action_counts
    averages = [np.full(n, 1.0 / n) for n in counts]
    for t in range(1, iterations + 1):
        responses = []
        for k in range(game.num_players):
            payout = _pure_payoffs(game.payoffs[k], averages, k)
            responses.append(int(np.argmax(payout)))
        for k, br in enumerate(responses):
            pure = np.zeros(counts[k])
            pure[br] = 1.0
            averages[k] = (t * averages[k] + pure) / (t + 1)
    return Solution(MixedProfile(tuple(averages)), None, iterations)


def project_to_exploration_simplex(x: np.ndarray, lower_bound: float) -> np.ndarray:
    """Euclidean projection onto the simplex with a per-coordinate floor.

    Shifts by the floor, projects onto the scaled simplex by the sorting rule,
    and shifts back.  Requires n * lower_bound <= 1.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if lower_bound < 0 or n * lower_bound > 1.0 + 1e-12:
        raise ValueError("lower bound must be nonnegative with n * lb <= 1")
    mass = 1.0 - n * lower_bound
    if mass <= 0.0:
        return np.full(n, lower_bound)
    shifted = x - lower_bound
    dropping = np.sort(shifted)[::-1]
    cumulative = np.cumsum(dropping)
    ranks = np.arange(1, n + 1)
    feasible = dropping - (cumulative - mass) / ranks > 0
    rho = int(np.nonzero(feasible)[0][-1])
    threshold = (cumulative[rho] - mass) / (rho + 1)
    return np.maximum(shifted - threshold, 0.0) + lower_bound


def solve_prd(
    game: NormalFormGame,
    iterations: int = 10_000,
    dt: float = 1e-2,
    gamma_explore: float = 1e-10,
) -> Solution:
    """Projected replicator dynamics with an exploration floor.

    Euler steps of the replicator field per player, each followed by a
    projection onto the simplex floored at gamma / (|A^k| + 1).
    """
    counts = game.action_counts
    floors = [gamma_explore / (n + 1) for n in counts]
    strategies = [np.full(n, 1.0 / n) for n in counts]
    for _ in range(iterations):
        updated = []
        for k in range(game.num_players):
            payout = _pure_payoffs(game.payoffs[k], strategies, k)
            mean_payout = strategies[k] @ payout
            step = strategies[k] + dt * strategies[k] * (payout - mean_payout)
            updated.append(project_to_exploration_simplex(step, floors[k]))
        strategies = updated
    return Solution(MixedProfile(tuple(strategies)), None, iterations)


def _regret_matching_run(game: NormalFormGame, iterations: int):
    """Full-width regret matching; also returns the cumulative regret tables."""
    counts = game.action_counts
    regrets = [np.zeros(n) for n in counts]
    strategy_sums = [np.zeros(n) for n in counts]
    joint_sum = np.zeros(counts)
    for _ in range(iterations):
        current = []
        for k in range(game.num_players):
            positive = np.maximum(regrets[k], 0.0)
            total = positive.sum()
            current.append(positive / total if total > 0 else np.full(counts[k], 1.0 / counts[k]))
        outer = np.ones(())
        for vec in current:
            outer = np.multiply.outer(outer, vec)
        joint_sum += outer
        for k in range(game.num_players):
            payout = _pure_payoffs(game.payoffs[k], current, k)
            baseline = current[k] @ payout
            regrets[k] += payout - baseline
            strategy_sums[k] += current[k]
    averages = tuple(s / iterations for s in strategy_sums)
    return averages, joint_sum.ravel() / iterations, regrets


def solve_regret_matching(game: NormalFormGame, iterations: int = 1000) -> Solution:
    """Full-width external regret matching.

    Each player plays proportionally to positive cumulative regrets (uniform
    when none are positive).  The profile is the per-player time average; the
    joint is the empirical average of the per-round product distributions,
    which acts as the correlating device.
    """
    averages, joint, _ = _regret_matching_run(game, iterations)
    return Solution(MixedProfile(averages), JointDistribution(joint), iterations)


def solve(game: NormalFormGame, config: SolverConfig) -> Solution:
    """Run the configured solver. Deterministic per (game, config)."""
    if config.kind is SolverKind.ALPHA_RANK:
        graph = rg.build_response_graph(game, config.alpha, config.m)
        joint = rg.stationary_distribution(graph)
        return Solution(marginalize(game, joint), joint, 1)
    if config.kind is SolverKind.CE_REGRET_MATCHING:
        return solve_regret_matching(game, config.iterations)
    if config.kind is SolverKind.FICTITIOUS_PLAY:
        return solve_fictitious_play(game, config.iterations)
    if config.kind is SolverKind.PRD:
        return solve_prd(game, config.iterations, config.dt, config.gamma_explore)
    raise ValueError(f"unknown solver kind: {config.kind}")


def default_config(kind: SolverKind) -> SolverConfig:
    """Per-kind default configuration."""
    if kind is SolverKind.ALPHA_RANK:
        return SolverConfig.alpha_rank()
    if kind is SolverKind.CE_REGRET_MATCHING:
        return SolverConfig.regret_matching()
    if kind is SolverKind.FICTITIOUS_PLAY:
        return SolverConfig.fictitious_play()
    if kind is SolverKind.PRD:
        return SolverConfig.prd()
    raise ValueError(f"unknown solver kind: {kind}")
