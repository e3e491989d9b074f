"""Exhaustive perturbation sweeps over the four frozen showcase games.

For each solver this perturbs the two (first action, first action) payoff
entries of its crafted 2x2 game across the full grid, writes the per-point
gap surface as CSV, and prints where the sweep beats the unmodified game.
PRD dominates the runtime (about 13 minutes); pass --solvers to subset.

Usage: python3 scripts/run_crafted_sweeps.py [--out-dir runs/sweeps] [--solvers fp ce]
"""

import argparse
import csv
import time
from pathlib import Path

from gamebend.crafted import crafted_game
from gamebend.env import sweep_2x2
from gamebend.solvers import SolverKind, default_config


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/sweeps")
    parser.add_argument("--solvers", nargs="*", default=None,
                        help="solver kinds to sweep (default: all four)")
    args = parser.parse_args()

    kinds = [SolverKind(name) for name in args.solvers] if args.solvers else list(SolverKind)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    for kind in kinds:
        t0 = time.time()
        result = sweep_2x2(crafted_game(kind), default_config(kind))
        path = out / f"sweep_{kind.value}.csv"
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["delta1", "delta2", "nashconv"])
            for i, d1 in enumerate(result.deltas_player1):
                for j, d2 in enumerate(result.deltas_player2):
                    writer.writerow([f"{d1:.1f}", f"{d2:.1f}", repr(float(result.grid[i, j]))])
        print(
            f"{kind.value}: base {result.base_value:.6f} -> min {result.best_value:.6f} "
            f"at ({result.best_delta1:+.1f}, {result.best_delta2:+.1f}) "
            f"[{time.time() - t0:.1f}s] -> {path}"
        )


if __name__ == "__main__":
    main()
