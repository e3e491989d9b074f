"""The game-modification decision process.

An episode starts from a sampled game M0.  Each step the agent picks component
weights in [-1, 1]^r; the environment adds the re-weighted factorization onto
the current payoffs, renormalizes, re-runs the configured solver on the
modified game, and pays the decrease in the solver's equilibrium gap measured
on the ORIGINAL game.  Rewards therefore telescope: their sum over an episode
is the gap at the start minus the gap at the end.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .cp import DEFAULT_ETA_STEP, DEFAULT_RANK, CPFactors, apply_modification, cp_decompose
from .games import NormalFormGame, nash_conv
from .solvers import SolverConfig, solve

# Games the solver already answers (near) exactly carry no improvement signal;
# below this starting gap they score zero and are excluded from aggregates.
SOLVED_BASELINE_TOL = 1e-6

DEFAULT_HORIZON = 50


class EpisodeOver(RuntimeError):
    """step() was called after the horizon was reached."""


@dataclass(frozen=True)
class EpisodeConfig:
    """Horizon, modification step size, factorization rank, solver, discount."""

    solver: SolverConfig
    horizon: int = DEFAULT_HORIZON
    eta_step: float = DEFAULT_ETA_STEP
    rank: int = DEFAULT_RANK
    discount: float = 0.99

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must be in (0, 1]")


@dataclass(frozen=True)
class EnvState:
    """Everything an episode carries between steps."""

    config: EpisodeConfig
    original: NormalFormGame
    current: NormalFormGame
    factors: CPFactors
    t: int
    nc_trace: tuple[float, ...]

    @property
    def baseline_nc(self) -> float:
        return self.nc_trace[0]

    @property
    def done(self) -> bool:
        return self.t >= self.config.horizon


@dataclass(frozen=True)
class StepResult:
    observation: tuple[NormalFormGame, NormalFormGame]
    reward: float
    done: bool
    info: dict


def reset(game: NormalFormGame, config: EpisodeConfig, factors: CPFactors | None = None) -> EnvState:
    """Factorize the game, solve it once, and record the starting gap."""
    if factors is None:
        factors = cp_decompose(game, rank=config.rank)
    elif factors.tensor_shape != game.payoffs.shape:
        raise ValueError("provided factors do not match the game's shape")
    solution = solve(game, config.solver)
    baseline = nash_conv(game, solution.profile)
    return EnvState(
        config=config,
        original=game,
        current=game,
        factors=factors,
        t=0,
        nc_trace=(baseline,),
    )


def step(state: EnvState, action: np.ndarray) -> tuple[EnvState, StepResult]:
    """Apply one clipped modification and pay the decrease in the gap."""
    if state.done:
        raise EpisodeOver(f"episode already finished after {state.t} steps")
    weights = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    modified = apply_modification(state.current, state.factors, weights, state.config.eta_step)
    solution = solve(modified, state.config.solver)
    gap = nash_conv(state.original, solution.profile)
    reward = state.nc_trace[-1] - gap
    new_state = replace(state, current=modified, t=state.t + 1, nc_trace=state.nc_trace + (gap,))
    info = {
        "nash_conv": gap,
        "min_nash_conv": min(new_state.nc_trace),
        "baseline_nc": new_state.baseline_nc,
        "t": new_state.t,
    }
    return new_state, StepResult((new_state.original, modified), reward, new_state.done, info)


def improvement_score(nc_trace: Sequence[float], baseline_nc: float) -> float:
    """1 - (best gap along the episode) / (starting gap), in [0, 1].

    The minimum includes the start, so a policy that only hurts still scores 0.
    Nearly solved starting games score 0 (and callers exclude them from means).
    """
    if not len(nc_trace):
        raise ValueError("need at least the starting gap")
    if baseline_nc < SOLVED_BASELINE_TOL:
        return 0.0
    best = min(min(nc_trace), baseline_nc)
    return 1.0 - best / baseline_nc


@dataclass(frozen=True)
class SweepResult:
    """Exhaustive 2-player first-entry perturbation sweep."""

    deltas_player1: np.ndarray
    deltas_player2: np.ndarray
    grid: np.ndarray  # gap on the original game, indexed [i (player 1), j (player 2)]
    base_value: float
    best_delta1: float
    best_delta2: float
    best_value: float


def sweep_2x2(
    game: NormalFormGame,
    solver_config: SolverConfig,
    delta_range: tuple[float, float] = (-2.0, 2.0),
    step_size: float = 0.1,
) -> SweepResult:
    """Perturb both players' (first action, first action) payoff entries.

    For every grid point, solve the perturbed game and measure the gap of the
    returned profile on the original game.  No renormalization is applied; the
    sweep probes the raw payoff landscape.
    """
    if game.num_players != 2:
        raise ValueError("the sweep is defined for 2-player games")
    lo, hi = delta_range
    count = int(round((hi - lo) / step_size)) + 1
    deltas = np.linspace(lo, hi, count)
    grid = np.zeros((count, count))
    for i, d1 in enumerate(deltas):
        for j, d2 in enumerate(deltas):
            payoffs = game.payoffs.copy()
            payoffs[0, 0, 0] += d1
            payoffs[1, 0, 0] += d2
            solution = solve(NormalFormGame(payoffs), solver_config)
            grid[i, j] = nash_conv(game, solution.profile)
    zero_i = int(np.argmin(np.abs(deltas)))
    best_flat = int(np.argmin(grid))
    bi, bj = np.unravel_index(best_flat, grid.shape)
    return SweepResult(
        deltas_player1=deltas,
        deltas_player2=deltas,
        grid=grid,
        base_value=float(grid[zero_i, zero_i]),
        best_delta1=float(deltas[bi]),
        best_delta2=float(deltas[bj]),
        best_value=float(grid[bi, bj]),
    )


class FactorCache:
    """Per-game factorizations, computed once and reused across episodes."""

    def __init__(self, rank: int = DEFAULT_RANK):
        self.rank = rank
        self._store: dict[int, CPFactors] = {}

    def get(self, index: int, game: NormalFormGame) -> CPFactors:
        if index not in self._store:
            self._store[index] = cp_decompose(game, rank=self.rank)
        return self._store[index]


class GameCycler:
    """Yields (index, game) forever, reshuffling the order each pass."""

    def __init__(self, games: Sequence[NormalFormGame], rng: np.random.Generator):
        if not games:
            raise ValueError("need at least one game")
        self._games = list(games)
        self._rng = rng
        self._order: list[int] = []

    def next(self) -> tuple[int, NormalFormGame]:
        if not self._order:
            self._order = list(self._rng.permutation(len(self._games)))
        index = self._order.pop(0)
        return index, self._games[index]


class GameModificationEnv:
    """Stateful reset/step wrapper used by the rollout collector.

    Observations are (original, current) game pairs; episodes auto-advance
    through the cycler's dataset on reset.
    """

    def __init__(self, config: EpisodeConfig, cycler: GameCycler, cache: FactorCache | None = None):
        self.config = config
        self._cycler = cycler
        self._cache = cache if cache is not None else FactorCache(config.rank)
        self._state: EnvState | None = None

    def reset(self) -> tuple[NormalFormGame, NormalFormGame]:
        index, game = self._cycler.next()
        factors = self._cache.get(index, game)
        self._state = reset(game, self.config, factors)
        return (self._state.original, self._state.current)

    def step(self, action: np.ndarray):
        if self._state is None:
            raise RuntimeError("call reset() before step()")
        self._state, result = step(self._state, action)
        return result.observation, result.reward, result.done, result.info

    @property
    def state(self) -> EnvState | None:
        return self._state


def run_greedy_episode(
    game: NormalFormGame,
    config: EpisodeConfig,
    action_fn,
    factors: CPFactors | None = None,
) -> tuple[float, EnvState]:
    """Roll one episode with a deterministic action function; returns the score."""
    state = reset(game, config, factors)
    while not state.done:
        observation = (state.original, state.current)
        state, _ = step(state, action_fn(observation))
    return improvement_score(state.nc_trace, state.baseline_nc), state
