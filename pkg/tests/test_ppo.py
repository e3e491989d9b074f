"""Rollout collection, return computation, the clipped update, and training."""

import numpy as np
import pytest

from gamebend.env import EpisodeConfig, GameCycler, GameModificationEnv
from gamebend.games import sample_random_game
from gamebend.nn import ActorCritic, EncoderMode, NetworkConfig, ParamStore
from gamebend.ppo import (
    METRIC_COLUMNS,
    Adam,
    PPOConfig,
    QuadraticTargetEnv,
    RolloutBuffer,
    collect_rollouts,
    compute_returns_advantages,
    evaluate_policy,
    ppo_update,
    train,
    write_metric_log,
)


def _tiny_policy(obs_dim=4, action_dim=2, seed=0):
    config = NetworkConfig(mode=EncoderMode.FLAT_MLP, mlp_hidden=8,
                           mlp_layers=2, action_dim=action_dim)
    return ActorCritic(config, input_dim=obs_dim, seed=seed)


def _quadratic_fleet(n=2, horizon=3, obs_dim=4, action_dim=2):
    return [QuadraticTargetEnv(np.zeros(action_dim), horizon=horizon, obs_dim=obs_dim)
            for _ in range(n)]


class TestConfig:
    def test_rollout_size(self):
        config = PPOConfig(num_envs=20, steps_per_rollout=100)
        assert config.rollout_size == 2000

    def test_rejects_more_minibatches_than_transitions(self):
        with pytest.raises(ValueError):
            PPOConfig(num_envs=1, steps_per_rollout=4, minibatches=5)

    def test_rejects_bad_clip(self):
        with pytest.raises(ValueError):
            PPOConfig(clip_epsilon=0.0)

    def test_clip_arithmetic(self):
        # the asymmetric clip: min(r*A, clip(r)*A) bounds gain not loss
        assert min(2.0 * 1.0, np.clip(2.0, 0.8, 1.2) * 1.0) == pytest.approx(1.2)
        assert min(2.0 * -1.0, np.clip(2.0, 0.8, 1.2) * -1.0) == pytest.approx(-2.0)


class TestAdam:
    def test_counts_steps_on_shared_store(self):
        store = ParamStore()
        store.create("w", np.ones(2))
        opt = Adam(store, learning_rate=0.1)
        store.grads["w"][...] = 1.0
        opt.step()
        opt.step()
        assert store.step_count == 2

    def test_first_step_moves_against_gradient_by_lr(self):
        # with bias correction the first update has magnitude ~lr per entry
        store = ParamStore()
        store.create("w", np.zeros(3))
        opt = Adam(store, learning_rate=0.05)
        store.grads["w"][...] = [1.0, -2.0, 0.5]
        opt.step()
        assert np.allclose(store.params["w"], [-0.05, 0.05, -0.05], atol=1e-6)

    def test_zero_gradient_leaves_params_fixed(self):
        store = ParamStore()
        store.create("w", np.array([1.0, 2.0]))
        opt = Adam(store, learning_rate=0.1)
        opt.step()
        assert np.allclose(store.params["w"], [1.0, 2.0])


class TestRollouts:
    def test_buffer_holds_num_envs_times_steps(self):
        policy = _tiny_policy()
        envs = _quadratic_fleet(n=4, horizon=3)
        buffer = collect_rollouts(policy, envs, steps=5, rng=np.random.default_rng(0))
        assert buffer.size == 20
        assert len(buffer.flat_obs()) == 20
        assert buffer.actions.shape == (4, 5, 2)

    def test_episode_boundaries_via_horizon(self):
        # horizon 2 and 4 steps: exactly 2 finished episodes per env
        policy = _tiny_policy()
        envs = _quadratic_fleet(n=1, horizon=2)
        buffer = collect_rollouts(policy, envs, steps=4, rng=np.random.default_rng(1))
        assert list(buffer.dones[0]) == [False, True, False, True]
        assert len(buffer.episode_returns) == 2
        assert buffer.episode_returns[0] == pytest.approx(buffer.rewards[0, :2].sum())

    def test_partial_returns_carry_across_rollouts(self):
        policy = _tiny_policy()
        envs = _quadratic_fleet(n=1, horizon=4)
        rng = np.random.default_rng(2)
        first = collect_rollouts(policy, envs, steps=2, rng=rng)
        carried = [first.rewards[0].sum()]
        second = collect_rollouts(policy, envs, steps=2, rng=rng,
                                  current_obs=first.last_obs, carry_returns=carried)
        assert len(first.episode_returns) == 0
        assert len(second.episode_returns) == 1
        total = first.rewards[0].sum() + second.rewards[0].sum()
        assert second.episode_returns[0] == pytest.approx(total)

    def test_same_seed_identical_buffers(self):
        a = collect_rollouts(_tiny_policy(seed=3), _quadratic_fleet(), 4,
                             np.random.default_rng(9))
        b = collect_rollouts(_tiny_policy(seed=3), _quadratic_fleet(), 4,
                             np.random.default_rng(9))
        assert np.array_equal(a.actions, b.actions)
        assert np.array_equal(a.rewards, b.rewards)
        assert np.array_equal(a.log_probs, b.log_probs)

    def test_game_envs_round_trip(self):
        games = [sample_random_game(2, (2, 2), seed=s) for s in range(2)]
        from gamebend.solvers import SolverConfig

        env_config = EpisodeConfig(solver=SolverConfig.fictitious_play(20), horizon=2, rank=2)
        cycler = GameCycler(games, np.random.default_rng(0))
        envs = [GameModificationEnv(env_config, cycler) for _ in range(2)]
        policy = _tiny_policy(obs_dim=16, action_dim=2)
        buffer = collect_rollouts(policy, envs, steps=3, rng=np.random.default_rng(0))
        assert buffer.size == 6
        assert all(obs.shape == (16,) for obs in buffer.flat_obs())


class TestReturns:
    def test_discounted_returns_with_terminal(self):
        buffer = RolloutBuffer(1, 2, 1)
        buffer.rewards[0] = [1.0, 1.0]
        buffer.dones[0] = [False, True]
        buffer.last_obs = [np.ones(4)]
        policy = _tiny_policy(obs_dim=4, action_dim=1)
        compute_returns_advantages(buffer, 0.99, policy)
        assert buffer.returns[0, 1] == pytest.approx(1.0)
        assert buffer.returns[0, 0] == pytest.approx(1.99)

    def test_truncation_bootstraps_last_value(self):
        buffer = RolloutBuffer(1, 2, 1)
        buffer.rewards[0] = [0.0, 0.0]
        buffer.dones[0] = [False, False]
        obs = np.ones(4)
        buffer.last_obs = [obs]
        policy = _tiny_policy(obs_dim=4, action_dim=1)
        tail = policy.value_single(obs)
        compute_returns_advantages(buffer, 0.5, policy)
        assert buffer.returns[0, 1] == pytest.approx(0.5 * tail)
        assert buffer.returns[0, 0] == pytest.approx(0.25 * tail)

    def test_advantages_are_normalized(self):
        buffer = RolloutBuffer(2, 8, 1)
        buffer.rewards[...] = np.random.default_rng(0).uniform(-1, 1, size=(2, 8))
        buffer.values[...] = np.random.default_rng(1).uniform(-1, 1, size=(2, 8))
        buffer.last_obs = [np.ones(4), np.ones(4)]
        compute_returns_advantages(buffer, 0.9, _tiny_policy(obs_dim=4, action_dim=1))
        assert buffer.advantages.mean() == pytest.approx(0.0, abs=1e-12)
        assert buffer.advantages.std() == pytest.approx(1.0, abs=1e-9)

    def test_constant_advantage_guard(self):
        # identical rewards and values everywhere: normalization must not blow up
        buffer = RolloutBuffer(1, 4, 1)
        buffer.rewards[...] = 0.0
        buffer.values[...] = 0.0
        buffer.dones[:, -1] = True
        buffer.last_obs = [np.ones(4)]
        compute_returns_advantages(buffer, 0.99, _tiny_policy(obs_dim=4, action_dim=1))
        assert np.all(np.isfinite(buffer.advantages))
        assert np.allclose(buffer.advantages, 0.0)


class TestUpdate:
    def _filled(self, policy, seed=0):
        envs = _quadratic_fleet(n=2, horizon=3, obs_dim=4, action_dim=2)
        buffer = collect_rollouts(policy, envs, steps=6, rng=np.random.default_rng(seed))
        compute_returns_advantages(buffer, 0.99, policy)
        return buffer

    def test_first_minibatch_ratio_is_one(self):
        # before any optimizer step the new and old log-probs coincide
        policy = _tiny_policy()
        buffer = self._filled(policy)
        obs = buffer.flat_obs()
        actions = buffer.actions.reshape(buffer.size, -1)
        old = buffer.log_probs.reshape(buffer.size)
        log_probs, _, _ = policy.evaluate(obs, actions)
        assert np.allclose(np.exp(log_probs.value - old), 1.0, atol=1e-6)

    def test_update_returns_metric_means(self):
        policy = _tiny_policy()
        buffer = self._filled(policy)
        config = PPOConfig(num_envs=2, steps_per_rollout=6, ppo_epochs=2,
                           minibatches=3, total_env_steps=12)
        optimizer = Adam(policy.store, config.learning_rate)
        metrics = ppo_update(policy, buffer, config, optimizer, np.random.default_rng(0))
        for key in ("policy_loss", "value_loss", "entropy", "clip_fraction", "mean_ratio"):
            assert np.isfinite(metrics[key]), key
        assert 0.0 <= metrics["clip_fraction"] <= 1.0
        assert metrics["mean_ratio"] == pytest.approx(1.0, abs=0.2)
        assert policy.store.step_count == 6

    def test_gradients_clipped_before_step(self):
        seen = []
        policy = _tiny_policy()
        buffer = self._filled(policy)
        config = PPOConfig(num_envs=2, steps_per_rollout=6, ppo_epochs=1,
                           minibatches=2, total_env_steps=12, max_grad_norm=0.5)

        class SpyAdam(Adam):
            def step(self):
                seen.append(self.store.global_grad_norm())
                super().step()

        ppo_update(policy, buffer, config, SpyAdam(policy.store, 1e-3),
                   np.random.default_rng(0))
        assert seen
        assert all(norm <= 0.5 + 1e-9 for norm in seen)

    def test_update_is_deterministic(self):
        results = []
        for _ in range(2):
            policy = _tiny_policy(seed=5)
            buffer = self._filled(policy, seed=11)
            config = PPOConfig(num_envs=2, steps_per_rollout=6, ppo_epochs=2,
                               minibatches=3, total_env_steps=12)
            ppo_update(policy, buffer, config, Adam(policy.store, 1e-3),
                       np.random.default_rng(21))
            results.append({k: v.copy() for k, v in policy.store.params.items()})
        for name in results[0]:
            assert np.array_equal(results[0][name], results[1][name]), name

    def test_params_stay_finite_over_updates(self):
        policy = _tiny_policy()
        config = PPOConfig(num_envs=2, steps_per_rollout=6, ppo_epochs=4,
                           minibatches=3, total_env_steps=24)
        optimizer = Adam(policy.store, config.learning_rate)
        envs = _quadratic_fleet(n=2, horizon=3)
        rng = np.random.default_rng(0)
        obs = None
        carry = [0.0, 0.0]
        for _ in range(2):
            buffer = collect_rollouts(policy, envs, 6, rng, obs, carry)
            obs = buffer.last_obs
            compute_returns_advantages(buffer, 0.99, policy)
            ppo_update(policy, buffer, config, optimizer, rng)
        for name, param in policy.store.params.items():
            assert np.all(np.isfinite(param)), name


class TestEvaluate:
    def test_scores_and_exclusions(self):
        from gamebend.solvers import SolverConfig

        games = [sample_random_game(2, (3, 3), seed=s) for s in range(3)]
        env_config = EpisodeConfig(solver=SolverConfig.fictitious_play(30), horizon=2, rank=2)
        policy = _tiny_policy(obs_dim=36, action_dim=2)
        mean, excluded, scores = evaluate_policy(policy, games, env_config)
        assert len(scores) == 3
        assert all(0.0 <= s <= 1.0 for s in scores)
        assert 0 <= excluded <= 3
        assert np.isfinite(mean)

    def test_greedy_evaluation_is_deterministic(self):
        from gamebend.solvers import SolverConfig

        games = [sample_random_game(2, (2, 2), seed=4)]
        env_config = EpisodeConfig(solver=SolverConfig.fictitious_play(20), horizon=2, rank=2)
        policy = _tiny_policy(obs_dim=16, action_dim=2)
        a = evaluate_policy(policy, games, env_config)
        b = evaluate_policy(policy, games, env_config)
        assert a == b


class TestTrain:
    def test_zero_updates_still_writes_checkpoint(self, tmp_path):
        games = [sample_random_game(2, (2, 2), seed=s) for s in range(2)]
        from gamebend.solvers import SolverConfig

        env_config = EpisodeConfig(solver=SolverConfig.fictitious_play(10), horizon=2, rank=2)
        ppo_config = PPOConfig(num_envs=1, steps_per_rollout=4, minibatches=2,
                               ppo_epochs=1, total_env_steps=0)
        net_config = NetworkConfig(mode=EncoderMode.FLAT_MLP, mlp_hidden=8,
                                   mlp_layers=2, action_dim=2)
        ckpt = tmp_path / "policy.json"
        result = train(games, games, env_config, ppo_config, net_config, seed=0,
                       checkpoint_path=ckpt)
        assert ckpt.exists()
        loaded = ActorCritic.load(ckpt)
        assert loaded.input_dim == 16
        assert result.metric_rows == []

    def test_short_run_logs_metrics_and_saves_best(self, tmp_path):
        games = [sample_random_game(2, (2, 2), seed=s) for s in range(2)]
        from gamebend.solvers import SolverConfig

        env_config = EpisodeConfig(solver=SolverConfig.fictitious_play(10), horizon=2, rank=2)
        ppo_config = PPOConfig(num_envs=2, steps_per_rollout=4, minibatches=2,
                               ppo_epochs=1, total_env_steps=16)
        net_config = NetworkConfig(mode=EncoderMode.FLAT_MLP, mlp_hidden=8,
                                   mlp_layers=2, action_dim=2)
        metric_path = tmp_path / "metrics.csv"
        result = train(games, games, env_config, ppo_config, net_config, seed=1,
                       checkpoint_path=tmp_path / "p.json", metric_path=metric_path,
                       eval_every=1)
        assert len(result.metric_rows) == 2
        assert result.best_test_score >= 0.0
        assert result.policy is not None
        text = metric_path.read_text().splitlines()
        assert text[0] == ",".join(METRIC_COLUMNS)
        assert len(text) == 3

    def test_fixed_seed_reproduces_metric_log(self, tmp_path):
        games = [sample_random_game(2, (2, 2), seed=s) for s in range(2)]
        from gamebend.solvers import SolverConfig

        env_config = EpisodeConfig(solver=SolverConfig.fictitious_play(10), horizon=2, rank=2)
        ppo_config = PPOConfig(num_envs=1, steps_per_rollout=4, minibatches=2,
                               ppo_epochs=1, total_env_steps=8)
        net_config = NetworkConfig(mode=EncoderMode.FLAT_MLP, mlp_hidden=8,
                                   mlp_layers=2, action_dim=2)
        rows = []
        for run in range(2):
            result = train(games, games, env_config, ppo_config, net_config, seed=7)
            rows.append(result.metric_rows)
        assert rows[0] == rows[1]


class TestMetricLog:
    def test_columns_and_blank_eval_cells(self, tmp_path):
        path = tmp_path / "m.csv"
        write_metric_log(path, [
            {"env_steps": 10, "mean_episode_return": 0.5, "policy_loss": 0.1,
             "value_loss": 0.2, "entropy": 1.4, "clip_fraction": 0.0},
        ])
        lines = path.read_text().splitlines()
        assert lines[0].split(",") == list(METRIC_COLUMNS)
        cells = lines[1].split(",")
        assert cells[2] == "" and cells[3] == ""  # train/test unevaluated


class TestQuadraticEnv:
    def test_reward_is_negative_squared_distance(self):
        env = QuadraticTargetEnv(np.array([1.0, -1.0]), horizon=2)
        env.reset()
        _, reward, done, _ = env.step(np.array([1.0, -1.0]))
        assert reward == 0.0 and not done
        _, reward, done, _ = env.step(np.array([0.0, 0.0]))
        assert reward == pytest.approx(-2.0)
        assert done
