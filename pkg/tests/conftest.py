import numpy as np
import pytest

from gamebend.games import NormalFormGame

# Rock < Paper < Scissors < Rock; row player is player 0.
RPS_PAYOFFS = np.array(
    [
        [[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]],
        [[0.0, 1.0, -1.0], [-1.0, 0.0, 1.0], [1.0, -1.0, 0.0]],
    ]
)

MATCHING_PENNIES_PAYOFFS = np.array(
    [
        [[1.0, -1.0], [-1.0, 1.0]],
        [[-1.0, 1.0], [1.0, -1.0]],
    ]
)

# action 0 strictly dominates for both players; (0, 0) is the unique NE
DOMINANCE_PAYOFFS = np.array(
    [
        [[1.0, 1.0], [0.0, 0.0]],
        [[1.0, 0.0], [1.0, 0.0]],
    ]
)


@pytest.fixture
def rps() -> NormalFormGame:
    return NormalFormGame(RPS_PAYOFFS)


@pytest.fixture
def matching_pennies() -> NormalFormGame:
    return NormalFormGame(MATCHING_PENNIES_PAYOFFS)


@pytest.fixture
def dominance_game() -> NormalFormGame:
    return NormalFormGame(DOMINANCE_PAYOFFS)


@pytest.fixture
def constant_game() -> NormalFormGame:
    return NormalFormGame(np.full((2, 2, 2), 3.0))


def eigen_stationary(transition: np.ndarray) -> np.ndarray:
    """Dense left-eigenvector oracle for the stationary distribution."""
    w, v = np.linalg.eig(transition.T)
    idx = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(v[:, idx])
    pi = np.abs(pi)
    return pi / pi.sum()
