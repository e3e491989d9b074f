import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gamebend.games import (
    ce_regret,
    nash_conv,
    sample_random_game,
)
from gamebend.solvers import (
    SolverConfig,
    SolverKind,
    _regret_matching_run,
    project_to_exploration_simplex,
    solve,
    solve_fictitious_play,
    solve_prd,
    solve_regret_matching,
)


class TestSolverConfig:
    def test_factory_defaults(self):
        assert SolverConfig.fictitious_play().iterations == 1000
        assert SolverConfig.regret_matching().iterations == 1000
        prd = SolverConfig.prd()
        assert prd.iterations == 10_000
        assert prd.dt == pytest.approx(1e-2)
        assert prd.gamma_explore == pytest.approx(1e-10)
        ar = SolverConfig.alpha_rank()
        assert (ar.alpha, ar.m) == (1.0, 5.0)

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SolverConfig(kind=SolverKind.FICTITIOUS_PLAY, iterations=0)
        with pytest.raises(ValueError):
            SolverConfig(kind=SolverKind.PRD, iterations=10, dt=0.0)
        with pytest.raises(ValueError):
            SolverConfig(kind=SolverKind.ALPHA_RANK, iterations=1, alpha=-1.0)


class TestFictitiousPlay:
    def test_matching_pennies_nearly_solved(self, matching_pennies):
        solution = solve_fictitious_play(matching_pennies, iterations=2000)
        assert nash_conv(matching_pennies, solution.profile) <= 0.05

    def test_dominance_game_locks_on(self, dominance_game):
        solution = solve_fictitious_play(dominance_game, iterations=100)
        assert solution.profile.per_player[0][0] >= 0.99
        assert solution.profile.per_player[1][0] >= 0.99

    def test_single_round_unrolls_by_hand(self, matching_pennies):
        # BR to uniform ties at (0, 0) for both players, so the averages
        # blend uniform with the first pure response half and half
        solution = solve_fictitious_play(matching_pennies, iterations=1)
        for vec in solution.profile.per_player:
            np.testing.assert_allclose(vec, [0.75, 0.25], atol=1e-12)

    def test_average_equals_mean_of_response_sequence(self):
        """Replay oracle: track the BR sequence independently and average it."""
        game = sample_random_game(2, (2, 3), seed=77)
        iterations = 50
        averages = [np.full(n, 1.0 / n) for n in game.action_counts]
        response_sums = [avg.copy() for avg in averages]  # uniform start counts once
        for t in range(1, iterations + 1):
            responses = []
            for k in range(2):
                other = 1 - k
                payout = np.tensordot(
                    game.payoffs[k], averages[other], axes=([other], [0])
                )
                responses.append(int(np.argmax(payout)))
            for k, br in enumerate(responses):
                pure = np.zeros(game.action_counts[k])
                pure[br] = 1.0
                response_sums[k] += pure
                averages[k] = (t * averages[k] + pure) / (t + 1)
        solution = solve_fictitious_play(game, iterations=iterations)
        for k in range(2):
            np.testing.assert_allclose(
                solution.profile.per_player[k],
                response_sums[k] / (iterations + 1),
                atol=1e-12,
            )


class TestProjection:
    def test_frozen_three_action_example(self):
        projected = project_to_exploration_simplex(np.array([1.0, 0.0, 0.0]), 0.025)
        np.testing.assert_allclose(projected, [0.95, 0.025, 0.025], atol=1e-12)

    def test_feasible_point_is_unchanged(self):
        x = np.array([0.5, 0.3, 0.2])
        np.testing.assert_allclose(project_to_exploration_simplex(x, 0.05), x, atol=1e-12)

    def test_zero_floor_on_simplex_point(self):
        x = np.array([0.6, 0.4])
        np.testing.assert_allclose(project_to_exploration_simplex(x, 0.0), x, atol=1e-12)

    def test_infeasible_floor_raises(self):
        with pytest.raises(ValueError):
            project_to_exploration_simplex(np.array([0.5, 0.5]), 0.6)

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(-5.0, 5.0),
        st.floats(-5.0, 5.0),
        st.floats(0.0, 0.45),
    )
    def test_two_action_closed_form(self, x0, x1, lb):
        """n=2 has a one-line answer: split the excess mass evenly, clamp."""
        projected = project_to_exploration_simplex(np.array([x0, x1]), lb)
        expected0 = np.clip((x0 - x1 + 1.0) / 2.0, lb, 1.0 - lb)
        np.testing.assert_allclose(projected, [expected0, 1.0 - expected0], atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-10.0, 10.0), min_size=2, max_size=6), st.floats(0.0, 0.1))
    def test_output_is_floored_distribution(self, values, lb):
        projected = project_to_exploration_simplex(np.array(values), lb)
        assert projected.sum() == pytest.approx(1.0, abs=1e-9)
        assert projected.min() >= lb - 1e-12


class TestPrd:
    def test_constant_game_stays_uniform(self, constant_game):
        solution = solve_prd(constant_game, iterations=500)
        for vec in solution.profile.per_player:
            np.testing.assert_allclose(vec, [0.5, 0.5], atol=1e-12)

    def test_dominant_action_takes_over(self, dominance_game):
        solution = solve_prd(dominance_game, iterations=5000, dt=1e-2, gamma_explore=1e-10)
        assert solution.profile.per_player[0][0] >= 0.99
        assert solution.profile.per_player[1][0] >= 0.99

    def test_iterates_respect_the_floor(self, matching_pennies):
        # rerun at increasing depths; every intermediate profile is a final
        # profile of some shorter run, so this checks the whole trajectory
        gamma = 0.3
        floor = gamma / 3.0  # two actions: gamma / (n + 1)
        for iterations in (1, 2, 5, 17, 60):
            solution = solve_prd(matching_pennies, iterations=iterations, gamma_explore=gamma)
            for vec in solution.profile.per_player:
                assert vec.min() >= floor - 1e-12


class TestRegretMatching:
    def test_constant_game_outputs_uniform(self, constant_game):
        solution = solve_regret_matching(constant_game, iterations=200)
        for vec in solution.profile.per_player:
            np.testing.assert_allclose(vec, [0.5, 0.5], atol=1e-12)
        np.testing.assert_allclose(solution.joint.probs, np.full(4, 0.25), atol=1e-12)

    def test_dominance_game_average_concentrates(self, dominance_game):
        solution = solve_regret_matching(dominance_game, iterations=1000)
        assert solution.profile.per_player[0][0] >= 0.95
        assert solution.profile.per_player[1][0] >= 0.95

    def test_matching_pennies_joint_near_correlated_equilibrium(self, matching_pennies):
        solution = solve_regret_matching(matching_pennies, iterations=5000)
        assert ce_regret(matching_pennies, solution.joint) <= 0.05

    def test_joint_is_average_of_round_products(self, matching_pennies):
        # with 1 iteration the round strategy is uniform, so the joint is too
        solution = solve_regret_matching(matching_pennies, iterations=1)
        np.testing.assert_allclose(solution.joint.probs, np.full(4, 0.25), atol=1e-12)

    @pytest.mark.parametrize("seed", [3, 19])
    def test_per_round_regret_rate_shrinks(self, seed):
        game = sample_random_game(2, (3, 3), seed)
        checkpoints = {}
        for t in (1000, 10_000):
            _, _, regrets = _regret_matching_run(game, t)
            checkpoints[t] = max(float(np.max(r)) for r in regrets) / t
        assert checkpoints[10_000] <= checkpoints[1000] + 1e-9


class TestDispatch:
    def test_alpha_rank_path(self, rps):
        solution = solve(rps, SolverConfig.alpha_rank())
        for vec in solution.profile.per_player:
            np.testing.assert_allclose(vec, np.full(3, 1 / 3), atol=1e-6)
        assert solution.joint is not None
        assert solution.joint.probs.size == 9

    def test_joint_presence_by_kind(self, matching_pennies):
        assert solve(matching_pennies, SolverConfig.fictitious_play(10)).joint is None
        assert solve(matching_pennies, SolverConfig.prd(10)).joint is None
        assert solve(matching_pennies, SolverConfig.regret_matching(10)).joint is not None

    def test_iterations_used_reported(self, matching_pennies):
        assert solve(matching_pennies, SolverConfig.fictitious_play(37)).solver_iterations_used == 37
        assert solve(matching_pennies, SolverConfig.alpha_rank()).solver_iterations_used == 1

    def test_deterministic_outputs(self, matching_pennies):
        config = SolverConfig.regret_matching(200)
        first = solve(matching_pennies, config)
        second = solve(matching_pennies, config)
        for a, b in zip(first.profile.per_player, second.profile.per_player):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(first.joint.probs, second.joint.probs)


def test_all_solvers_return_valid_profiles_everywhere():
    """1000 random games through all four solvers (short budgets)."""
    configs = [
        SolverConfig.alpha_rank(),
        SolverConfig.regret_matching(50),
        SolverConfig.fictitious_play(50),
        SolverConfig.prd(100),
    ]
    rng = np.random.default_rng(0)
    for _ in range(1000):
        num_players = int(rng.integers(2, 4))
        counts = tuple(int(c) for c in rng.integers(2, 5, num_players))
        game = sample_random_game(num_players, counts, int(rng.integers(2**31)))
        for config in configs:
            solution = solve(game, config)
            assert len(solution.profile.per_player) == num_players
            for k, vec in enumerate(solution.profile.per_player):
                assert vec.size == counts[k]
                assert vec.min() >= 0.0
                assert vec.sum() == pytest.approx(1.0, abs=1e-9)
            if solution.joint is not None:
                assert solution.joint.probs.sum() == pytest.approx(1.0, abs=1e-9)
