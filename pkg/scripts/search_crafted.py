"""Search for 2x2 showcase games where the payoff sweep beats each solver.

Samples random 2x2 games with one-decimal entries, screens them on a coarse
perturbation grid, and verifies the most promising instance per solver on the
full 41x41 grid.  Winners are meant to be frozen into gamebend.crafted.

Usage: python3 scripts/search_crafted.py [--candidates N] [--seed S]
"""

import argparse
import time

import numpy as np

from gamebend.env import sweep_2x2
from gamebend.games import NormalFormGame, nash_conv
from gamebend.solvers import SolverConfig, SolverKind, solve

SCREEN_CONFIGS = {
    SolverKind.ALPHA_RANK: SolverConfig.alpha_rank(),
    SolverKind.CE_REGRET_MATCHING: SolverConfig.regret_matching(1000),
    SolverKind.FICTITIOUS_PLAY: SolverConfig.fictitious_play(1000),
    # fewer iterations while screening; winners are re-checked at full depth
    SolverKind.PRD: SolverConfig.prd(iterations=2000),
}

FULL_CONFIGS = {
    SolverKind.ALPHA_RANK: SolverConfig.alpha_rank(),
    SolverKind.CE_REGRET_MATCHING: SolverConfig.regret_matching(1000),
    SolverKind.FICTITIOUS_PLAY: SolverConfig.fictitious_play(1000),
    SolverKind.PRD: SolverConfig.prd(),
}


def coarse_margin(game: NormalFormGame, config: SolverConfig) -> tuple[float, float]:
    base = nash_conv(game, solve(game, config).profile)
    best = base
    for d1 in np.linspace(-2.0, 2.0, 9):
        for d2 in np.linspace(-2.0, 2.0, 9):
            payoffs = game.payoffs.copy()
            payoffs[0, 0, 0] += d1
            payoffs[1, 0, 0] += d2
            profile = solve(NormalFormGame(payoffs), config).profile
            best = min(best, nash_conv(game, profile))
    return base, base - best


def has_pure_equilibrium(payoffs: np.ndarray) -> bool:
    a, b = payoffs[0], payoffs[1]
    for i in range(2):
        for j in range(2):
            if a[i, j] >= a[1 - i, j] and b[i, j] >= b[i, 1 - j]:
                return True
    return False


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--candidates", type=int, default=40)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--min-base", type=float, default=0.15,
                        help="smallest unmodified gap worth showcasing")
    parser.add_argument("--mixed-only", action="store_true",
                        help="keep only games without a pure equilibrium "
                             "(the hard class for the iterative solvers)")
    parser.add_argument("--solvers", nargs="*", default=None,
                        help="restrict to these solver kinds")
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    candidates = []
    while len(candidates) < args.candidates:
        payoffs = np.round(rng.uniform(-1.0, 1.0, size=(2, 2, 2)), 1)
        if args.mixed_only and has_pure_equilibrium(payoffs):
            continue
        candidates.append(payoffs)

    kinds = list(SolverKind)
    if args.solvers:
        kinds = [SolverKind(name) for name in args.solvers]
    for kind in kinds:
        config = SCREEN_CONFIGS[kind]
        scored = []
        t0 = time.perf_counter()
        for idx, payoffs in enumerate(candidates):
            game = NormalFormGame(payoffs)
            base, margin = coarse_margin(game, config)
            if base >= args.min_base:
                scored.append((margin, base, idx))
        scored.sort(reverse=True)
        print(f"\n== {kind.value}: screened {len(candidates)} candidates "
              f"in {time.perf_counter() - t0:.1f}s, {len(scored)} usable ==")
        for margin, base, idx in scored[:3]:
            print(f"  candidate {idx}: base {base:.4f}, coarse margin {margin:.4f}")
        if not scored:
            continue
        _, _, best_idx = scored[0]
        game = NormalFormGame(candidates[best_idx])
        t0 = time.perf_counter()
        result = sweep_2x2(game, FULL_CONFIGS[kind])
        print(f"  full sweep of candidate {best_idx} "
              f"({time.perf_counter() - t0:.1f}s):")
        print(f"    base {result.base_value:.6f} -> min {result.best_value:.6f} "
              f"at ({result.best_delta1:+.1f}, {result.best_delta2:+.1f})")
        print(f"    payoffs = {candidates[best_idx].tolist()}")


if __name__ == "__main__":
    main()
