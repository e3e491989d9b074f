"""Line-oriented game dataset files and the two sampling regimes.

One game per line as a JSON object with fields {id, num_players,
action_counts, payoffs, seed}; payoffs are the row-major flattened tensor at
full float precision, so files round-trip exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .games import NormalFormGame, sample_random_game

SIMPLE_PLAYERS = 2
SIMPLE_ACTIONS = 5
GENERAL_PLAYER_CHOICES = (2, 3)
GENERAL_ACTION_CHOICES = (2, 3, 4)

# Train and test draws come from disjoint seed blocks.
_TEST_SEED_OFFSET = 10_000_000


@dataclass(frozen=True)
class GameRecord:
    id: str
    game: NormalFormGame
    seed: int


def sample_simple_game(seed: int) -> NormalFormGame:
    """The fixed-shape regime: 2 players, 5 actions each."""
    return sample_random_game(SIMPLE_PLAYERS, (SIMPLE_ACTIONS,) * SIMPLE_PLAYERS, seed)


def sample_general_game(seed: int) -> tuple[NormalFormGame, int]:
    """The varied-shape regime: 2-3 players with 2-4 actions each.

    Returns the game and the seed that generated its payoffs.
    """
    structure_rng = np.random.default_rng(seed)
    num_players = int(structure_rng.choice(GENERAL_PLAYER_CHOICES))
    counts = tuple(int(c) for c in structure_rng.choice(GENERAL_ACTION_CHOICES, num_players))
    payoff_seed = int(structure_rng.integers(2**31))
    return sample_random_game(num_players, counts, payoff_seed), payoff_seed


def sample_records(case: str, count: int, base_seed: int, prefix: str) -> list[GameRecord]:
    """Deterministically sample `count` games for one split."""
    records = []
    for i in range(count):
        seed = base_seed + i
        if case == "simple":
            game = sample_simple_game(seed)
            payoff_seed = seed
        elif case == "general":
            game, payoff_seed = sample_general_game(seed)
        else:
            raise ValueError(f"unknown case: {case}")
        records.append(GameRecord(id=f"{prefix}-{i:05d}", game=game, seed=payoff_seed))
    return records


def sample_splits(
    case: str, train_count: int, test_count: int, base_seed: int
) -> tuple[list[GameRecord], list[GameRecord]]:
    """Train and test splits drawn from disjoint seed ranges."""
    train = sample_records(case, train_count, base_seed, "train")
    test = sample_records(case, test_count, base_seed + _TEST_SEED_OFFSET, "test")
    return train, test


def write_dataset(path, records: list[GameRecord]) -> None:
    lines = []
    for record in records:
        lines.append(
            json.dumps(
                {
                    "id": record.id,
                    "num_players": record.game.num_players,
                    "action_counts": list(record.game.action_counts),
                    "payoffs": record.game.payoffs.ravel().tolist(),
                    "seed": record.seed,
                },
                separators=(",", ":"),
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_dataset(path) -> list[GameRecord]:
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        blob = json.loads(line)
        shape = (blob["num_players"], *blob["action_counts"])
        payoffs = np.array(blob["payoffs"], dtype=float).reshape(shape)
        records.append(
            GameRecord(id=blob["id"], game=NormalFormGame(payoffs), seed=int(blob["seed"]))
        )
    return records
