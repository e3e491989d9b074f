"""Clipped-surrogate policy optimization over the modification environment.

Rollouts come from a fixed-order fleet of environments sharing one dataset
cycler; updates run several epochs of shuffled minibatches over the filled
buffer with Adam, a clipped importance-ratio objective, a squared-error value
loss, and an entropy bonus.  Everything is deterministic given the seeds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .env import (
    EpisodeConfig,
    FactorCache,
    GameCycler,
    GameModificationEnv,
    improvement_score,
    reset as env_reset,
    step as env_step,
)
from .games import NormalFormGame

METRIC_COLUMNS = (
    "env_steps",
    "mean_episode_return",
    "train_score",
    "test_score",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_fraction",
)


class UpdateError(RuntimeError):
    """The surrogate loss became non-finite."""


@dataclass(frozen=True)
class PPOConfig:
    learning_rate: float = 1e-3
    discount: float = 0.99
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    num_envs: int = 20
    steps_per_rollout: int = 100
    ppo_epochs: int = 16
    clip_epsilon: float = 0.2
    minibatches: int = 64
    total_env_steps: int = 600_000

    def __post_init__(self):
        if min(self.num_envs, self.steps_per_rollout, self.ppo_epochs, self.minibatches) < 1:
            raise ValueError("counts must be positive")
        if self.minibatches > self.num_envs * self.steps_per_rollout:
            raise ValueError("more minibatches than transitions per rollout")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must be in (0, 1)")
        if self.learning_rate <= 0 or self.max_grad_norm <= 0:
            raise ValueError("learning rate and grad-norm ceiling must be positive")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must be in (0, 1]")

    @property
    def rollout_size(self) -> int:
        return self.num_envs * self.steps_per_rollout


class Adam:
    """Adam over a ParamStore; moments are kept per named block."""

    def __init__(self, store: nn.ParamStore, learning_rate: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.store = store
        self.learning_rate = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self._m = {name: np.zeros_like(p) for name, p in store.params.items()}
        self._v = {name: np.zeros_like(p) for name, p in store.params.items()}

    def step(self) -> None:
        self.store.step_count += 1
        t = self.store.step_count
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        for name, param in self.store.params.items():
            grad = self.store.grads[name]
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param -= self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


class RolloutBuffer:
    """Fixed-size on-policy buffer, laid out [env][step]."""

    def __init__(self, num_envs: int, steps: int, action_dim: int):
        self.num_envs = num_envs
        self.steps = steps
        self.obs: list[list] = [[None] * steps for _ in range(num_envs)]
        self.last_obs: list = [None] * num_envs
        self.actions = np.zeros((num_envs, steps, action_dim))
        self.log_probs = np.zeros((num_envs, steps))
        self.values = np.zeros((num_envs, steps))
        self.rewards = np.zeros((num_envs, steps))
        self.dones = np.zeros((num_envs, steps), dtype=bool)
        self.returns = np.zeros((num_envs, steps))
        self.advantages = np.zeros((num_envs, steps))
        self.episode_returns: list[float] = []
        self.episode_records: list[dict] = []

    @property
    def size(self) -> int:
        return self.num_envs * self.steps

    def flat_obs(self) -> list:
        return [self.obs[i][t] for i in range(self.num_envs) for t in range(self.steps)]


def collect_rollouts(
    policy: nn.ActorCritic,
    envs: list,
    steps: int,
    rng: np.random.Generator,
    current_obs: list | None = None,
    carry_returns: list[float] | None = None,
) -> RolloutBuffer:
    """Fill a buffer by stepping every environment `steps` times in fixed order.

    Environments auto-reset on episode end.  `current_obs` carries prepared
    observations across successive rollouts (None resets everything) and
    `carry_returns` keeps per-env partial episode returns across boundaries.
    """
    buffer = RolloutBuffer(len(envs), steps, policy.config.action_dim)
    if current_obs is None:
        current_obs = [policy.prepare(env.reset()) for env in envs]
    returns_so_far = carry_returns if carry_returns is not None else [0.0] * len(envs)
    for t in range(steps):
        for i, env in enumerate(envs):
            prepared = current_obs[i]
            action, log_prob, value = policy.act(prepared, rng)
            observation, reward, done, info = env.step(action)
            buffer.obs[i][t] = prepared
            buffer.actions[i, t] = action
            buffer.log_probs[i, t] = log_prob
            buffer.values[i, t] = value
            buffer.rewards[i, t] = reward
            buffer.dones[i, t] = done
            returns_so_far[i] += reward
            if done:
                buffer.episode_returns.append(returns_so_far[i])
                buffer.episode_records.append(dict(info))
                returns_so_far[i] = 0.0
                current_obs[i] = policy.prepare(env.reset())
            else:
                current_obs[i] = policy.prepare(observation)
    buffer.last_obs = list(current_obs)
    return buffer


def compute_returns_advantages(buffer: RolloutBuffer, discount: float, policy: nn.ActorCritic) -> None:
    """Discounted returns with bootstrap at truncation; normalized advantages."""
    for i in range(buffer.num_envs):
        running = policy.value_single(buffer.last_obs[i])
        for t in range(buffer.steps - 1, -1, -1):
            if buffer.dones[i, t]:
                running = 0.0
            running = buffer.rewards[i, t] + discount * running
            buffer.returns[i, t] = running
    raw = buffer.returns - buffer.values
    std = float(raw.std())
    if std < 1e-8:
        buffer.advantages = raw - raw.mean()
    else:
        buffer.advantages = (raw - raw.mean()) / std


def ppo_update(
    policy: nn.ActorCritic,
    buffer: RolloutBuffer,
    config: PPOConfig,
    optimizer: Adam,
    rng: np.random.Generator,
) -> dict:
    """Epochs of shuffled minibatches over the buffer; returns mean metrics."""
    store = policy.store
    obs = buffer.flat_obs()
    actions = buffer.actions.reshape(buffer.size, -1)
    old_log_probs = buffer.log_probs.reshape(buffer.size)
    advantages = buffer.advantages.reshape(buffer.size)
    returns = buffer.returns.reshape(buffer.size)

    totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
              "clip_fraction": 0.0, "mean_ratio": 0.0}
    batches = 0
    for _ in range(config.ppo_epochs):
        order = rng.permutation(buffer.size)
        for batch in np.array_split(order, config.minibatches):
            batch_obs = [obs[j] for j in batch]
            log_probs, entropy, values = policy.evaluate(batch_obs, actions[batch])
            ratio = nn.exp(nn.sub(log_probs, old_log_probs[batch]))
            adv = advantages[batch]
            unclipped = nn.mul(ratio, adv)
            clipped = nn.mul(
                nn.clip(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon), adv
            )
            policy_loss = nn.mul(nn.tmean(nn.minimum(unclipped, clipped)), -1.0)
            value_loss = nn.tmean(nn.square(nn.sub(values, returns[batch])))
            loss = nn.add(
                nn.add(policy_loss, nn.mul(value_loss, config.value_coef)),
                nn.mul(entropy, -config.entropy_coef),
            )
            if not np.isfinite(loss.value):
                raise UpdateError(
                    f"non-finite loss (policy {policy_loss.value}, value {value_loss.value})"
                )
            store.zero_grads()
            nn.backward(loss, store)
            store.clip_grad_norm(config.max_grad_norm)
            optimizer.step()
            totals["policy_loss"] += float(policy_loss.value)
            totals["value_loss"] += float(value_loss.value)
            totals["entropy"] += float(entropy.value)
            totals["clip_fraction"] += float(
                np.mean(np.abs(ratio.value - 1.0) > config.clip_epsilon)
            )
            totals["mean_ratio"] += float(ratio.value.mean())
            batches += 1
    return {key: value / batches for key, value in totals.items()}


# ---------------------------------------------------------------------------
# evaluation and the outer training loop
# ---------------------------------------------------------------------------


def evaluate_policy(
    policy: nn.ActorCritic,
    games: list[NormalFormGame],
    env_config: EpisodeConfig,
    cache: FactorCache | None = None,
) -> tuple[float, int, list[float]]:
    """Greedy-mean episodes over a dataset.

    Returns (mean score over scoreable games, number excluded because the
    solver already answered them, per-game scores with excluded games at 0).
    """
    scores: list[float] = []
    included: list[float] = []
    excluded = 0
    for index, game in enumerate(games):
        factors = cache.get(index, game) if cache is not None else None
        state = env_reset(game, env_config, factors)
        if state.baseline_nc < 1e-6:
            excluded += 1
            scores.append(0.0)
            continue
        while not state.done:
            prepared = policy.prepare((state.original, state.current))
            state, _ = env_step(state, policy.greedy_action(prepared))
        score = improvement_score(state.nc_trace, state.baseline_nc)
        scores.append(score)
        included.append(score)
    mean = float(np.mean(included)) if included else 0.0
    return mean, excluded, scores


@dataclass
class TrainResult:
    best_test_score: float
    best_train_score: float
    best_checkpoint_path: str | None
    metric_rows: list[dict] = field(default_factory=list)
    policy: nn.ActorCritic | None = None


def train(
    train_games: list[NormalFormGame],
    test_games: list[NormalFormGame],
    env_config: EpisodeConfig,
    ppo_config: PPOConfig,
    net_config: nn.NetworkConfig,
    seed: int,
    checkpoint_path=None,
    metric_path=None,
    eval_every: int = 5,
    envs: list | None = None,
    input_dim: int | None = None,
) -> TrainResult:
    """Full training run for one seed; persists the best-by-test checkpoint.

    `envs` overrides the environment fleet (the analytic sanity environment
    plugs in here); by default the fleet wraps the training games.
    """
    rng = np.random.default_rng(seed)
    action_rng = np.random.default_rng(rng.integers(2**63))
    update_rng = np.random.default_rng(rng.integers(2**63))
    cycler_rng = np.random.default_rng(rng.integers(2**63))

    train_cache = FactorCache(env_config.rank)
    test_cache = FactorCache(env_config.rank)
    if envs is None:
        cycler = GameCycler(train_games, cycler_rng)
        envs = [
            GameModificationEnv(env_config, cycler, train_cache)
            for _ in range(ppo_config.num_envs)
        ]
        if input_dim is None and net_config.mode is nn.EncoderMode.FLAT_MLP:
            shape = train_games[0].payoffs.shape
            input_dim = 2 * int(np.prod(shape))
    policy = nn.ActorCritic(net_config, input_dim=input_dim, seed=seed)
    optimizer = Adam(policy.store, ppo_config.learning_rate)

    best_test = -np.inf
    best_train = 0.0
    if checkpoint_path is not None:
        policy.save(checkpoint_path)  # zero-step runs still leave a valid file

    metric_rows: list[dict] = []
    updates = ppo_config.total_env_steps // ppo_config.rollout_size
    env_steps = 0
    current_obs = None
    carry_returns = [0.0] * len(envs)
    for update_index in range(updates):
        buffer = collect_rollouts(
            policy, envs, ppo_config.steps_per_rollout, action_rng, current_obs, carry_returns
        )
        current_obs = buffer.last_obs
        compute_returns_advantages(buffer, ppo_config.discount, policy)
        metrics = ppo_update(policy, buffer, ppo_config, optimizer, update_rng)
        env_steps += ppo_config.rollout_size

        row = {
            "env_steps": env_steps,
            "mean_episode_return": float(np.mean(buffer.episode_returns))
            if buffer.episode_returns
            else float("nan"),
            "train_score": "",
            "test_score": "",
            "policy_loss": metrics["policy_loss"],
            "value_loss": metrics["value_loss"],
            "entropy": metrics["entropy"],
            "clip_fraction": metrics["clip_fraction"],
        }
        is_last = update_index == updates - 1
        if train_games and (update_index % eval_every == eval_every - 1 or is_last):
            train_score, _, _ = evaluate_policy(policy, train_games, env_config, train_cache)
            test_score, _, _ = evaluate_policy(policy, test_games, env_config, test_cache)
            row["train_score"] = train_score
            row["test_score"] = test_score
            if test_score > best_test:
                best_test = test_score
                best_train = train_score
                if checkpoint_path is not None:
                    policy.save(checkpoint_path)
        metric_rows.append(row)
        if metric_path is not None:
            write_metric_log(metric_path, metric_rows)
    if metric_path is not None:
        write_metric_log(metric_path, metric_rows)
    return TrainResult(
        best_test_score=float(best_test) if np.isfinite(best_test) else 0.0,
        best_train_score=float(best_train),
        best_checkpoint_path=str(checkpoint_path) if checkpoint_path is not None else None,
        metric_rows=metric_rows,
        policy=policy,
    )


def write_metric_log(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row.get(key, "") for key in METRIC_COLUMNS})


class QuadraticTargetEnv:
    """Analytic check environment: reward is -(distance to a fixed target)^2.

    The observation is a constant vector, so the optimal policy mean is the
    target itself regardless of state.
    """

    def __init__(self, target: np.ndarray, horizon: int = 10, obs_dim: int = 4):
        self.target = np.asarray(target, dtype=float)
        self.horizon = horizon
        self._obs = np.ones(obs_dim)
        self._t = 0

    def reset(self) -> np.ndarray:
        self._t = 0
        return self._obs

    def step(self, action: np.ndarray):
        diff = np.asarray(action, dtype=float) - self.target
        reward = -float(diff @ diff)
        self._t += 1
        done = self._t >= self.horizon
        if done:
            self._t = 0
        return self._obs, reward, done, {}
