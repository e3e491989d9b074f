"""Desk-scale comparison: trained modification policy vs a random one.

Sends every seed through the full pipeline (sample splits, random baseline on
the held-out games, PPO training with best-by-test checkpointing) and writes a
comparison table.  The defaults reproduce the stock desk profile; expect
around ten minutes per seed on one CPU.

Usage: python3 scripts/run_desk_experiment.py [--out-dir runs/desk] [--seeds 0 1 2]
"""

import argparse
import csv
import time
from pathlib import Path

import numpy as np

from gamebend import nn, ppo
from gamebend.cli import _random_policy_scores
from gamebend.datasets import sample_splits, write_dataset
from gamebend.env import EpisodeConfig, FactorCache
from gamebend.solvers import SolverConfig


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/desk")
    parser.add_argument("--case", default="simple", choices=["simple", "general"])
    parser.add_argument("--seeds", type=int, nargs="*", default=[0, 1, 2])
    parser.add_argument("--train-count", type=int, default=200)
    parser.add_argument("--test-count", type=int, default=50)
    parser.add_argument("--horizon", type=int, default=20)
    parser.add_argument("--total-env-steps", type=int, default=100_000)
    parser.add_argument("--eval-every", type=int, default=1)
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_records, test_records = sample_splits(
        args.case, args.train_count, args.test_count, base_seed=0
    )
    write_dataset(out / "train.jsonl", train_records)
    write_dataset(out / "test.jsonl", test_records)
    train_games = [r.game for r in train_records]
    test_games = [r.game for r in test_records]

    env_config = EpisodeConfig(
        solver=SolverConfig.alpha_rank(), horizon=args.horizon, rank=10
    )
    ppo_config = ppo.PPOConfig(total_env_steps=args.total_env_steps)
    mode = nn.EncoderMode.FLAT_MLP if args.case == "simple" else nn.EncoderMode.GRAPH
    net_config = nn.NetworkConfig(mode=mode, action_dim=10)

    cache = FactorCache(env_config.rank)
    rows = []
    for seed in args.seeds:
        random_mean, excluded, _ = _random_policy_scores(
            test_games, env_config, env_config.rank, seed, cache
        )
        t0 = time.time()
        result = ppo.train(
            train_games, test_games, env_config, ppo_config, net_config,
            seed=seed,
            checkpoint_path=out / f"checkpoint_seed{seed}.json",
            metric_path=out / f"metrics_seed{seed}.csv",
            eval_every=args.eval_every,
        )
        rows.append(
            {
                "seed": seed,
                "trained_test_score": result.best_test_score,
                "random_test_score": random_mean,
                "margin": result.best_test_score - random_mean,
                "excluded_games": excluded,
                "wall_seconds": round(time.time() - t0, 1),
            }
        )
        print(
            f"seed {seed}: trained {result.best_test_score:.4f} "
            f"vs random {random_mean:.4f} ({rows[-1]['wall_seconds']}s)"
        )

    with open(out / "comparison.csv", "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)

    trained = np.array([row["trained_test_score"] for row in rows])
    random_scores = np.array([row["random_test_score"] for row in rows])
    wins = int(np.sum(trained > random_scores.mean()))
    print(
        f"\npooled: trained {trained.mean():.4f} +/- {trained.std():.4f} "
        f"vs random {random_scores.mean():.4f} +/- {random_scores.std():.4f}; "
        f"{wins}/{len(rows)} seeds above the random mean"
    )


if __name__ == "__main__":
    main()
