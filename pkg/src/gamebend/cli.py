"""Command-line workbench tying sampling, training, evaluation, and checks together.

Subcommands: sample, baseline, train, eval, sweep, grad-check, solver-bench.
Every run writes a manifest capturing the resolved configuration, so results
are reproducible from the files alone.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn, ppo
from .crafted import crafted_game
from .datasets import read_dataset, sample_records, sample_splits, write_dataset
from .env import (
    EpisodeConfig,
    FactorCache,
    improvement_score,
    reset as env_reset,
    step as env_step,
    sweep_2x2,
)
from .games import NormalFormGame, nash_conv
from .solvers import SolverConfig, SolverKind, default_config, solve

SOLVER_CHOICES = tuple(kind.value for kind in SolverKind)
CASE_CHOICES = ("simple", "general")


@dataclass
class ExperimentConfig:
    """Everything a run needs, JSON round-trippable."""

    case: str = "simple"
    solver: str = "alpha_rank"
    encoder: str = ""  # resolved from case when empty
    train_count: int = 3000
    test_count: int = 500
    base_seed: int = 0
    seeds: tuple[int, ...] = (0, 1, 2)
    horizon: int = 50
    eta_step: float = 5.0
    rank: int = 10
    discount: float = 0.99
    solver_iterations: int = 0  # 0 = per-solver default
    alpha: float = 1.0
    m: float = 5.0
    dt: float = 1e-2
    gamma_explore: float = 1e-10
    learning_rate: float = 1e-3
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    num_envs: int = 20
    steps_per_rollout: int = 100
    ppo_epochs: int = 16
    clip_epsilon: float = 0.2
    minibatches: int = 64
    total_env_steps: int = 600_000
    eval_every: int = 5
    action_dim: int = 10
    mlp_hidden: int = 64
    mlp_layers: int = 3
    gcn_layers: int = 2
    node_embed_dim: int = 20

    def __post_init__(self):
        if self.case not in CASE_CHOICES:
            raise ValueError(f"case must be one of {CASE_CHOICES}")
        if self.solver not in SOLVER_CHOICES:
            raise ValueError(f"solver must be one of {SOLVER_CHOICES}")
        if not self.encoder:
            self.encoder = "flat_mlp" if self.case == "simple" else "graph"
        self.seeds = tuple(int(s) for s in self.seeds)

    def solver_config(self) -> SolverConfig:
        kind = SolverKind(self.solver)
        config = default_config(kind)
        overrides = {}
        if self.solver_iterations:
            overrides["iterations"] = self.solver_iterations
        if kind is SolverKind.ALPHA_RANK:
            overrides.update(alpha=self.alpha, m=self.m)
        if kind is SolverKind.PRD:
            overrides.update(dt=self.dt, gamma_explore=self.gamma_explore)
        return dataclasses.replace(config, **overrides) if overrides else config

    def episode_config(self) -> EpisodeConfig:
        return EpisodeConfig(
            solver=self.solver_config(),
            horizon=self.horizon,
            eta_step=self.eta_step,
            rank=self.rank,
            discount=self.discount,
        )

    def ppo_config(self) -> ppo.PPOConfig:
        return ppo.PPOConfig(
            learning_rate=self.learning_rate,
            discount=self.discount,
            entropy_coef=self.entropy_coef,
            value_coef=self.value_coef,
            max_grad_norm=self.max_grad_norm,
            num_envs=self.num_envs,
            steps_per_rollout=self.steps_per_rollout,
            ppo_epochs=self.ppo_epochs,
            clip_epsilon=self.clip_epsilon,
            minibatches=self.minibatches,
            total_env_steps=self.total_env_steps,
        )

    def network_config(self) -> nn.NetworkConfig:
        return nn.NetworkConfig(
            mode=nn.EncoderMode(self.encoder),
            gcn_layers=self.gcn_layers,
            node_embed_dim=self.node_embed_dim,
            mlp_hidden=self.mlp_hidden,
            mlp_layers=self.mlp_layers,
            action_dim=self.action_dim,
            graph_alpha=self.alpha,
            graph_m=self.m,
        )


DESK_SCALE = {
    "train_count": 200,
    "test_count": 50,
    "horizon": 20,
    "total_env_steps": 100_000,
    "seeds": (0, 1, 2),
}


def resolve_config(args) -> ExperimentConfig:
    """Config file < desk-scale profile < explicit flags, in rising priority."""
    values: dict = {}
    if args.config:
        values.update(json.loads(Path(args.config).read_text()))
    if getattr(args, "desk_scale", False):
        values.update(DESK_SCALE)
    for key in ("case", "solver"):
        flag = getattr(args, key, None)
        if flag:
            values[key] = flag
    if getattr(args, "seed", None) is not None:
        values["base_seed"] = args.seed
        values["seeds"] = tuple(args.seed + i for i in range(len(values.get("seeds", (0, 1, 2)))))
    if "seeds" in values:
        values["seeds"] = tuple(values["seeds"])
    return ExperimentConfig(**values)


def write_manifest(out_dir: Path, config: ExperimentConfig, command: str, extra: dict | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    blob = {
        "command": command,
        "config": dataclasses.asdict(config),
        "argv": sys.argv[1:],
    }
    if extra:
        blob.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(blob, indent=2, default=list))


def _out_dir(args) -> Path:
    return Path(args.out_dir)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_sample(args) -> int:
    config = resolve_config(args)
    out = _out_dir(args)
    write_manifest(out, config, "sample")
    train, test = sample_splits(config.case, config.train_count, config.test_count, config.base_seed)
    write_dataset(out / "train.jsonl", train)
    write_dataset(out / "test.jsonl", test)
    print(f"wrote {len(train)} train and {len(test)} test games to {out}")
    return 0


def _random_policy_scores(
    games: list[NormalFormGame],
    env_config: EpisodeConfig,
    rank: int,
    seed: int,
    cache: FactorCache,
) -> tuple[float, int, list[float]]:
    """Uniform-random weights each step; the learning-free reference."""
    rng = np.random.default_rng(seed)
    included: list[float] = []
    scores: list[float] = []
    excluded = 0
    for index, game in enumerate(games):
        factors = cache.get(index, game)
        state = env_reset(game, env_config, factors)
        if state.baseline_nc < 1e-6:
            excluded += 1
            scores.append(0.0)
            continue
        while not state.done:
            action = rng.uniform(-1.0, 1.0, rank)
            state, _ = env_step(state, action)
        score = improvement_score(state.nc_trace, state.baseline_nc)
        scores.append(score)
        included.append(score)
    return (float(np.mean(included)) if included else 0.0), excluded, scores


def cmd_baseline(args) -> int:
    config = resolve_config(args)
    out = _out_dir(args)
    write_manifest(out, config, "baseline")
    if args.dataset:
        records = read_dataset(args.dataset)
    else:
        records = sample_records(config.case, config.test_count, config.base_seed + 10_000_000, "test")
    games = [r.game for r in records]
    env_config = config.episode_config()
    cache = FactorCache(config.rank)
    rows = []
    for seed in config.seeds:
        mean, excluded, _ = _random_policy_scores(games, env_config, config.rank, seed, cache)
        rows.append({"seed": seed, "mean_score": mean, "excluded": excluded})
        print(f"seed {seed}: random-policy score {mean:.4f} ({excluded} excluded)")
    with open(out / "baseline.csv", "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=["seed", "mean_score", "excluded"])
        writer.writeheader()
        writer.writerows(rows)
    pooled = float(np.mean([r["mean_score"] for r in rows]))
    spread = float(np.std([r["mean_score"] for r in rows]))
    print(f"random baseline: {pooled:.4f} +/- {spread:.4f} over {len(rows)} seeds")
    return 0


def cmd_train(args) -> int:
    config = resolve_config(args)
    out = _out_dir(args)
    write_manifest(out, config, "train")
    train_records, test_records = sample_splits(
        config.case, config.train_count, config.test_count, config.base_seed
    )
    train_games = [r.game for r in train_records]
    test_games = [r.game for r in test_records]
    env_config = config.episode_config()
    summary_rows = []
    for seed in config.seeds:
        t0 = time.time()
        result = ppo.train(
            train_games,
            test_games,
            env_config,
            config.ppo_config(),
            config.network_config(),
            seed=seed,
            checkpoint_path=out / f"checkpoint_seed{seed}.json",
            metric_path=out / f"metrics_seed{seed}.csv",
            eval_every=config.eval_every,
        )
        summary_rows.append(
            {
                "seed": seed,
                "best_test_score": result.best_test_score,
                "best_train_score": result.best_train_score,
                "wall_seconds": round(time.time() - t0, 1),
            }
        )
        print(
            f"seed {seed}: best test {result.best_test_score:.4f}, "
            f"best train {result.best_train_score:.4f}"
        )
    with open(out / "summary.csv", "w", newline="") as handle:
        writer = csv.DictWriter(
            handle, fieldnames=["seed", "best_test_score", "best_train_score", "wall_seconds"]
        )
        writer.writeheader()
        writer.writerows(summary_rows)
    tests = [row["best_test_score"] for row in summary_rows]
    print(f"test score over seeds: {np.mean(tests):.4f} +/- {np.std(tests):.4f}")
    return 0


def cmd_eval(args) -> int:
    config = resolve_config(args)
    out = _out_dir(args)
    write_manifest(out, config, "eval", {"checkpoint": args.checkpoint, "dataset": args.dataset})
    policy = nn.ActorCritic.load(args.checkpoint)
    records = read_dataset(args.dataset)
    games = [r.game for r in records]
    env_config = config.episode_config()
    cache = FactorCache(config.rank)
    mean, excluded, scores = ppo.evaluate_policy(policy, games, env_config, cache)
    with open(out / "scores.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "score"])
        for record, score in zip(records, scores):
            writer.writerow([record.id, score])
    print(f"mean score {mean:.4f} over {len(games) - excluded} games ({excluded} excluded)")
    return 0


def cmd_sweep(args) -> int:
    config = resolve_config(args)
    out = _out_dir(args)
    write_manifest(out, config, "sweep", {"crafted": args.crafted, "dataset": args.dataset})
    if args.dataset:
        records = read_dataset(args.dataset)
        game = records[args.index].game
        label = records[args.index].id
    else:
        kind = SolverKind(args.crafted or config.solver)
        game = crafted_game(kind)
        label = f"crafted-{kind.value}"
    result = sweep_2x2(game, config.solver_config())
    with open(out / "sweep.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["delta1", "delta2", "nashconv"])
        for i, d1 in enumerate(result.deltas_player1):
            for j, d2 in enumerate(result.deltas_player2):
                # repr of the python float keeps full precision and parses back
                writer.writerow([f"{d1:.1f}", f"{d2:.1f}", repr(float(result.grid[i, j]))])
    print(
        f"{label}: unmodified gap {result.base_value:.6f}; best {result.best_value:.6f} "
        f"at deltas ({result.best_delta1:+.1f}, {result.best_delta2:+.1f})"
    )
    return 0


def cmd_grad_check(args) -> int:
    from .checks import run_grad_checks

    worst = run_grad_checks(verbose=True)
    print(f"worst relative error: {worst:.3e}")
    return 0 if worst <= 1e-4 else 1


def cmd_solver_bench(args) -> int:
    config = resolve_config(args)
    out = _out_dir(args)
    write_manifest(out, config, "solver-bench")
    if args.dataset:
        games = [r.game for r in read_dataset(args.dataset)]
    else:
        games = [r.game for r in sample_records(config.case, args.count, config.base_seed, "bench")]
    rows = []
    for kind in SolverKind:
        solver = default_config(kind)
        gaps = []
        t0 = time.time()
        for game in games:
            solution = solve(game, solver)
            gaps.append(nash_conv(game, solution.profile))
        elapsed = time.time() - t0
        rows.append(
            {
                "solver": kind.value,
                "mean_nashconv": float(np.mean(gaps)),
                "max_nashconv": float(np.max(gaps)),
                "seconds_per_solve": elapsed / len(games),
            }
        )
        print(
            f"{kind.value:12s} mean gap {rows[-1]['mean_nashconv']:.4f} "
            f"({rows[-1]['seconds_per_solve'] * 1e3:.1f} ms/solve)"
        )
    with open(out / "solver_bench.csv", "w", newline="") as handle:
        writer = csv.DictWriter(
            handle, fieldnames=["solver", "mean_nashconv", "max_nashconv", "seconds_per_solve"]
        )
        writer.writeheader()
        writer.writerows(rows)
    return 0


# ---------------------------------------------------------------------------
# argument surface
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gamebend",
        description="Learn payoff modifications that help inexact equilibrium solvers.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON experiment config file")
    common.add_argument("--seed", type=int, default=None, help="base seed override")
    common.add_argument("--out-dir", default="runs/latest", help="output directory")
    common.add_argument("--solver", choices=SOLVER_CHOICES, default=None)
    common.add_argument("--case", choices=CASE_CHOICES, default=None)
    common.add_argument("--desk-scale", action="store_true",
                        help="small-footprint profile: 200/50 games, horizon 20, 1e5 steps")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", parents=[common], help="sample train/test game datasets")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("baseline", parents=[common], help="random-policy reference scores")
    p.add_argument("--dataset", default=None, help="dataset file (defaults to sampling the test split)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("train", parents=[common], help="train the modification policy")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="greedy evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="exhaustive 2x2 perturbation sweep")
    p.add_argument("--crafted", choices=SOLVER_CHOICES, default=None,
                   help="use the registered showcase game for this solver")
    p.add_argument("--dataset", default=None, help="sweep a dataset game instead")
    p.add_argument("--index", type=int, default=0, help="game index within --dataset")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("grad-check", parents=[common], help="finite-difference gradient audit")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("solver-bench", parents=[common], help="gap and timing per solver")
    p.add_argument("--dataset", default=None)
    p.add_argument("--count", type=int, default=20, help="games to sample when no dataset given")
    p.set_defaults(func=cmd_solver_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
