"""Evolutionary response graphs over joint pure actions and their stationary mass.

Nodes are joint pure actions (row-major order).  A directed edge connects two
joint actions that differ in exactly one player's action; its weight is a
logistic-style function of that player's payoff difference, so better unilateral
deviations carry more transition mass.  Ranking strategies by the stationary
distribution of this chain is itself an (inexact) equilibrium solver, and the
graph doubles as a size-independent observation encoding for the networks.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .games import JointDistribution, MixedProfile, NormalFormGame, marginalize

# Payoff differences smaller than this are treated as exact ties.
_TIE_TOL = 1e-10

# Exponent arguments are clamped here before exponentiation (overflow guard).
_EXP_CLIP = 500.0

DEFAULT_ALPHA = 1.0
DEFAULT_M = 5.0


class StationaryError(RuntimeError):
    """Power iteration failed to reach the requested residual."""

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"stationary distribution did not converge: residual {residual:.3e} "
            f"after {iterations} iterations"
        )


@dataclass(frozen=True)
class ResponseGraph:
    """Row-stochastic single-deviation transition matrix over joint actions."""

    transition: np.ndarray
    action_counts: tuple[int, ...]
    alpha: float
    m: float

    def __post_init__(self):
        mat = np.array(self.transition, dtype=float)
        n = int(np.prod(self.action_counts))
        if mat.shape != (n, n):
            raise ValueError(f"transition must be {n}x{n} for action counts {self.action_counts}")
        if np.any(mat < -1e-12) or np.any(mat > 1.0 + 1e-12):
            raise ValueError("transition entries must lie in [0, 1]")
        rows = mat.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > 1e-9:
            raise ValueError("transition rows must each sum to 1")
        mat.flags.writeable = False
        object.__setattr__(self, "transition", mat)
        object.__setattr__(self, "action_counts", tuple(int(c) for c in self.action_counts))

    @property
    def num_nodes(self) -> int:
        return self.transition.shape[0]

    def node_of(self, joint_action) -> int:
        return int(np.ravel_multi_index(tuple(joint_action), self.action_counts))

    def joint_of(self, node: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(node, self.action_counts))


@lru_cache(maxsize=64)
def _deviation_edges(action_counts: tuple[int, ...]):
    """Index arrays (src, dst, player) for every single-player deviation edge."""
    num_players = len(action_counts)
    total = int(np.prod(action_counts))
    nodes = np.arange(total).reshape(action_counts)
    src_parts, dst_parts, player_parts = [], [], []
    for k in range(num_players):
        along_k = np.moveaxis(nodes, k, 0).reshape(action_counts[k], -1)
        for a in range(action_counts[k]):
            for b in range(action_counts[k]):
                if a == b:
                    continue
                src_parts.append(along_k[a])
                dst_parts.append(along_k[b])
                player_parts.append(np.full(along_k.shape[1], k, dtype=int))
    src = np.concatenate(src_parts)
    dst = np.concatenate(dst_parts)
    player = np.concatenate(player_parts)
    for arr in (src, dst, player):
        arr.flags.writeable = False
    return src, dst, player


def build_response_graph(
    game: NormalFormGame, alpha: float = DEFAULT_ALPHA, m: float = DEFAULT_M
) -> ResponseGraph:
    """Build the single-deviation transition matrix for a game.

    The weight of an edge where player k's payoff changes by d is
    eta * (1 - exp(-alpha * d)) / (1 - exp(-alpha * m * d)), with the tie case
    |d| < 1e-10 replaced by eta / m.  eta = 1 / sum_k(|A^k| - 1) so rows are
    stochastic once the self-loop absorbs the remainder.
    """
    if alpha <= 0 or m <= 1:
        raise ValueError("alpha must be positive and m greater than 1")
    counts = game.action_counts
    src, dst, player = _deviation_edges(counts)
    eta = 1.0 / sum(n - 1 for n in counts)
    flat = game.payoffs.reshape(game.num_players, -1)
    diff = flat[player, dst] - flat[player, src]
    num = 1.0 - np.exp(np.clip(-alpha * diff, -_EXP_CLIP, _EXP_CLIP))
    den = 1.0 - np.exp(np.clip(-alpha * m * diff, -_EXP_CLIP, _EXP_CLIP))
    tie = np.abs(diff) < _TIE_TOL
    den = np.where(tie, 1.0, den)
    weights = np.where(tie, eta / m, eta * num / den)

    total = int(np.prod(counts))
    matrix = np.zeros((total, total))
    matrix[src, dst] = weights
    leftover = 1.0 - matrix.sum(axis=1)
    matrix[np.arange(total), np.arange(total)] = np.maximum(leftover, 0.0)
    return ResponseGraph(matrix, counts, float(alpha), float(m))


# Plain power iteration switches to repeated squaring of the transition matrix
# after this many single steps; slowly mixing chains (near-absorbing nodes)
# otherwise need more steps than any reasonable budget allows, and even
# healthy chains mix faster under squaring once the matrix is this small.
_PLAIN_STEPS = 128
_MAX_SQUARINGS = 64


def stationary_distribution(
    graph: ResponseGraph, tol: float = 1e-10, max_iterations: int = 100_000
) -> JointDistribution:
    """Stationary distribution of the response chain, from a uniform start.

    Runs plain power iteration first; if the L1 residual has not reached `tol`
    it escalates to repeated squaring of the transition matrix (equivalent to
    taking 2^j steps at once), which resolves slowly mixing chains.  Raises
    StationaryError when the residual still exceeds `tol` afterwards.
    """
    matrix = graph.transition
    n = graph.num_nodes
    dist = np.full(n, 1.0 / n)
    iterations = 0
    residual = np.inf
    for _ in range(min(_PLAIN_STEPS, max_iterations)):
        nxt = dist @ matrix
        iterations += 1
        residual = float(np.abs(nxt - dist).sum())
        dist = nxt
        if residual <= tol:
            return JointDistribution(dist)
    if max_iterations > _PLAIN_STEPS:
        powered = matrix
        for _ in range(_MAX_SQUARINGS):
            powered = powered @ powered
            # squaring slowly leaks row mass to float error; renormalize
            powered /= powered.sum(axis=1, keepdims=True)
            dist = powered.mean(axis=0)
            residual = float(np.abs(dist @ matrix - dist).sum())
            if residual <= tol:
                return JointDistribution(dist)
    raise StationaryError(residual, iterations)


def alpha_rank_solve(
    game: NormalFormGame, alpha: float = DEFAULT_ALPHA, m: float = DEFAULT_M
) -> MixedProfile:
    """Per-player marginals of the stationary distribution of the response chain."""
    graph = build_response_graph(game, alpha, m)
    joint = stationary_distribution(graph)
    return marginalize(game, joint)
