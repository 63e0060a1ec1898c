"""Train/validation/test split and label distribution tables."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction

from .errors import TooFewItemsError
from .labelgen import EXCLUDED_GOAL, N_GOALS


@dataclass(frozen=True)
class SplitConfig:
    ratios: tuple = (0.70, 0.15, 0.15)
    seed: int = 42

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios):
            raise ValueError("ratios must be three non-negative numbers")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {sum(self.ratios)}")


@dataclass(frozen=True)
class DatasetBundle:
    train: list
    validation: list
    test: list


def split_sizes(n, ratios=(0.70, 0.15, 0.15)):
    # Fraction(str(0.7)) == 7/10 exactly, so floor(0.7 * n) has no float drift
    r_train, r_val = (Fraction(str(r)) for r in ratios[:2])
    n_train = math.floor(r_train * n)
    n_val = math.floor(r_val * n)
    return n_train, n_val, n - n_train - n_val


def split_dataset(data, config: SplitConfig | None = None):
    """Shuffle and cut ``data`` into train/validation/test.

    The shuffle uses Python's ``random.Random`` (Mersenne Twister) seeded with
    ``config.seed``, which is stable across platforms and Python versions.
    Sizes are floor(r_train*n), floor(r_val*n) and the remainder for test.
    """
    config = config or SplitConfig()
    n = len(data)
    if n < 3:
        raise TooFewItemsError(f"need at least 3 items to split, got {n}")
    order = list(range(n))
    random.Random(config.seed).shuffle(order)
    n_train, n_val, _ = split_sizes(n, config.ratios)
    pick = lambda idx: [data[i] for i in idx]  # noqa: E731
    return DatasetBundle(
        train=pick(order[:n_train]),
        validation=pick(order[n_train:n_train + n_val]),
        test=pick(order[n_train + n_val:]),
    )


def label_distribution(data):
    """Per-goal ``(goal, count, percent)`` rows for goals 1..17.

    Percentages are shares of all label mentions, so they sum to 100 whenever
    any label exists.
    """
    counts = [0] * N_GOALS
    for item in data:
        vec = getattr(item, "labels", item)
        for i, bit in enumerate(vec):
            counts[i] += int(bit)
    assert counts[EXCLUDED_GOAL - 1] == 0
    total = sum(counts)
    return [
        (g, counts[g - 1], 100.0 * counts[g - 1] / total if total else 0.0)
        for g in range(1, N_GOALS + 1)
    ]
