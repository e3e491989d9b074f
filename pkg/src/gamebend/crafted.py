"""Hand-picked 2x2 games where perturbing two payoff entries helps each solver.

Each instance came out of scripts/search_crafted.py: sample random 2x2 games
with one-decimal entries in [-1, 1], run the exhaustive two-entry perturbation
sweep, and keep a game where the sweep's best cell scores strictly better
(always measured on the unmodified game) than the solver does at (0, 0).
They demonstrate, solver by solver, that payoff modification has room to
help before any learning enters the picture.

Grid minima found by the search, for orientation (base -> best):
  alpha_rank: 0.2445 -> 0.0146 at (-2.0, +2.0)
  ce:         0.0262 -> 0.0014 at (-0.2, +0.0)
  fp:         0.0295 -> 0.0009 at (-0.2, +0.0)
  prd:        0.1503 -> 0.0043 at (+0.2, +0.8)
"""

from __future__ import annotations

import numpy as np

from .games import NormalFormGame
from .solvers import SolverKind

# fmt: off
_CRAFTED: dict[SolverKind, list[list[list[float]]]] = {
    # The stationary distribution concentrates away from the equilibrium cell;
    # shifting the two swept entries redirects enough transition mass to fix it.
    SolverKind.ALPHA_RANK: [
        [[-0.7, 0.4], [0.1, -0.4]],
        [[0.0, 0.8], [0.9, -0.3]],
    ],
    # No pure equilibrium, so best responses cycle.  Averaging solvers converge
    # on generic 2x2 games, which keeps the base gap small (~0.03); the sweep
    # still cuts it by an order of magnitude.  The same cycle game works for
    # both averaging solvers below.
    SolverKind.CE_REGRET_MATCHING: [
        [[-0.7, 0.1], [0.8, -1.0]],
        [[-0.2, -0.6], [0.4, 0.6]],
    ],
    SolverKind.FICTITIOUS_PLAY: [
        [[-0.7, 0.1], [0.8, -1.0]],
        [[-0.2, -0.6], [0.4, 0.6]],
    ],
    # The replicator flow stalls near an exploitable interior point; a small
    # nudge to the first row-player entry steers it toward the equilibrium.
    SolverKind.PRD: [
        [[-0.8, 0.9], [0.4, 0.6]],
        [[0.8, 0.2], [-0.9, 0.4]],
    ],
}
# fmt: on


def crafted_game(kind: SolverKind) -> NormalFormGame:
    """The registered showcase instance for one solver."""
    return NormalFormGame(np.array(_CRAFTED[kind], dtype=float))
