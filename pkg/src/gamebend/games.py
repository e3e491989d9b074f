"""Normal-form games as dense payoff tensors, plus equilibrium gap measures.

A K-player game is stored as a single array of shape [K, |A^1|, ..., |A^K|]
where entry [k, a1, ..., aK] is player k's payoff under the joint pure action
(a1, ..., aK).  Everything downstream (solvers, response graphs, the
modification environment) works against this one representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# All sampled / modified games are affinely rescaled into this symmetric range
# so payoff magnitudes stay bounded for both the solvers and the networks.
PAYOFF_BOUND = 5.0

# Probability vectors are renormalized once accumulated float error exceeds this.
_PROB_DRIFT = 1e-9


class ShapeError(ValueError):
    """A strategy object does not match the game's player/action dimensions."""


def _as_prob_vector(values, name: str) -> np.ndarray:
    vec = np.array(values, dtype=float)
    if vec.ndim != 1 or vec.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-D array")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"{name} entries must be finite")
    if np.any(vec < -1e-12):
        raise ValueError(f"{name} entries must be nonnegative")
    vec = np.maximum(vec, 0.0)
    total = vec.sum()
    if total <= 0.0:
        raise ValueError(f"{name} must carry positive mass")
    if abs(total - 1.0) > _PROB_DRIFT:
        vec = vec / total
    vec.flags.writeable = False
    return vec


@dataclass(frozen=True)
class NormalFormGame:
    """Dense-payoff normal-form game.

    Attributes:
      payoffs: array of shape [K, |A^1|, ..., |A^K|], finite entries.
    """

    payoffs: np.ndarray

    def __post_init__(self):
        tensor = np.array(self.payoffs, dtype=float)
        if tensor.ndim < 3:
            raise ShapeError("payoff tensor needs a player mode plus one mode per player")
        num_players = tensor.shape[0]
        if num_players < 2:
            raise ShapeError("games need at least two players")
        if tensor.ndim != num_players + 1:
            raise ShapeError(
                f"payoff tensor has {tensor.ndim - 1} action modes; expected {num_players}"
            )
        if any(n < 1 for n in tensor.shape[1:]):
            raise ShapeError("every player needs at least one action")
        if not np.all(np.isfinite(tensor)):
            raise ValueError("payoff entries must be finite")
        tensor.flags.writeable = False
        object.__setattr__(self, "payoffs", tensor)

    @property
    def num_players(self) -> int:
        return self.payoffs.shape[0]

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(self.payoffs.shape[1:])

    @property
    def num_joint_actions(self) -> int:
        return int(np.prod(self.action_counts))


@dataclass(frozen=True)
class MixedProfile:
    """One independent mixed strategy per player."""

    per_player: tuple[np.ndarray, ...]

    def __post_init__(self):
        vecs = tuple(
            _as_prob_vector(v, f"strategy for player {k}")
            for k, v in enumerate(self.per_player)
        )
        if not vecs:
            raise ValueError("profile needs at least one player")
        object.__setattr__(self, "per_player", vecs)

    @property
    def num_players(self) -> int:
        return len(self.per_player)


@dataclass(frozen=True)
class JointDistribution:
    """Distribution over joint pure actions, flattened row-major."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _as_prob_vector(self.probs, "joint distribution"))

    @property
    def num_outcomes(self) -> int:
        return self.probs.size


def check_profile(game: NormalFormGame, profile: MixedProfile) -> None:
    if profile.num_players != game.num_players:
        raise ShapeError(
            f"profile has {profile.num_players} players, game has {game.num_players}"
        )
    for k, vec in enumerate(profile.per_player):
        if vec.size != game.action_counts[k]:
            raise ShapeError(
                f"player {k} strategy has {vec.size} actions, game expects "
                f"{game.action_counts[k]}"
            )


def check_joint(game: NormalFormGame, joint: JointDistribution) -> None:
    if joint.num_outcomes != game.num_joint_actions:
        raise ShapeError(
            f"joint distribution has {joint.num_outcomes} outcomes, game has "
            f"{game.num_joint_actions} joint actions"
        )


def deviation_payoffs(game: NormalFormGame, profile: MixedProfile, player: int) -> np.ndarray:
    """Expected payoff to `player` of each pure action against the others' mixtures.

    Only the opponents' components of `profile` are used.
    """
    check_profile(game, profile)
    table = game.payoffs[player]
    for k in range(game.num_players - 1, -1, -1):
        if k == player:
            continue
        table = np.tensordot(table, profile.per_player[k], axes=([k], [0]))
    return table


def expected_payoff(game: NormalFormGame, profile: MixedProfile, player: int) -> float:
    """Expected payoff to `player` when everyone plays their mixture."""
    devs = deviation_payoffs(game, profile, player)
    return float(profile.per_player[player] @ devs)


def best_response(game: NormalFormGame, profile: MixedProfile, player: int) -> tuple[int, float]:
    """Pure best response (lowest index on ties) and its expected value."""
    devs = deviation_payoffs(game, profile, player)
    idx = int(np.argmax(devs))
    return idx, float(devs[idx])


def nash_conv(game: NormalFormGame, profile: MixedProfile) -> float:
    """Sum over players of the best-response gain against the profile.

    Zero exactly at Nash equilibria; larger values mean a worse approximation.
    """
    total = 0.0
    for k in range(game.num_players):
        devs = deviation_payoffs(game, profile, k)
        total += float(devs.max()) - float(profile.per_player[k] @ devs)
    return max(total, 0.0)


def ce_regret(game: NormalFormGame, joint: JointDistribution) -> float:
    """Largest conditional switching gain any player has against a joint distribution.

    For every player k and action pair (a, b) this measures the gain from
    playing b whenever the joint draw recommends a; the result is the maximum
    over all such deviations, floored at zero.
    """
    check_joint(game, joint)
    table = joint.probs.reshape(game.action_counts)
    worst = 0.0
    for k in range(game.num_players):
        n_k = game.action_counts[k]
        joint_k = np.moveaxis(table, k, 0).reshape(n_k, -1)
        pay_k = np.moveaxis(game.payoffs[k], k, 0).reshape(n_k, -1)
        # gains[a, b] = sum over opponents' actions of P(a, rest) * M^k(b, rest)
        gains = joint_k @ pay_k.T
        gains = gains - np.diag(gains)[:, None]
        worst = max(worst, float(gains.max()))
    return max(worst, 0.0)


def marginalize(game: NormalFormGame, joint: JointDistribution) -> MixedProfile:
    """Per-player marginals of a joint distribution, each renormalized."""
    check_joint(game, joint)
    table = joint.probs.reshape(game.action_counts)
    marginals = []
    for k in range(game.num_players):
        axes = tuple(i for i in range(game.num_players) if i != k)
        vec = table.sum(axis=axes)
        marginals.append(vec / vec.sum())
    return MixedProfile(tuple(marginals))


def normalize_payoffs(game: NormalFormGame) -> NormalFormGame:
    """Affinely rescale all payoffs into [-PAYOFF_BOUND, PAYOFF_BOUND].

    Constant tensors map to all zeros.  Best responses are preserved because
    the map is increasing and shared across players.
    """
    lo = float(game.payoffs.min())
    hi = float(game.payoffs.max())
    if hi - lo < 1e-12:
        return NormalFormGame(np.zeros_like(game.payoffs))
    scaled = 2.0 * PAYOFF_BOUND * (game.payoffs - lo) / (hi - lo) - PAYOFF_BOUND
    return NormalFormGame(scaled)


def sample_random_game(num_players: int, action_counts, seed: int) -> NormalFormGame:
    """Uniform-random payoff tensor, normalized. Deterministic per seed."""
    if num_players not in (2, 3):
        raise ValueError("only 2- and 3-player games are sampled")
    counts = tuple(int(c) for c in action_counts)
    if len(counts) != num_players:
        raise ShapeError("one action count per player required")
    if any(c < 2 for c in counts):
        raise ValueError("every player needs at least two actions")
    rng = np.random.default_rng(seed)
    raw = rng.uniform(-1.0, 1.0, size=(num_players, *counts))
    return normalize_payoffs(NormalFormGame(raw))


def uniform_profile(game: NormalFormGame) -> MixedProfile:
    return MixedProfile(tuple(np.full(n, 1.0 / n) for n in game.action_counts))


def pure_profile(game: NormalFormGame, actions) -> MixedProfile:
    """Point-mass profile on one joint pure action."""
    if len(actions) != game.num_players:
        raise ShapeError("one action per player required")
    vecs = []
    for k, a in enumerate(actions):
        vec = np.zeros(game.action_counts[k])
        vec[a] = 1.0
        vecs.append(vec)
    return MixedProfile(tuple(vecs))


def profile_as_joint(game: NormalFormGame, profile: MixedProfile) -> JointDistribution:
    """Product distribution induced by independent mixtures."""
    check_profile(game, profile)
    table = np.ones(())
    for vec in profile.per_player:
        table = np.multiply.outer(table, vec)
    return JointDistribution(table.ravel())
