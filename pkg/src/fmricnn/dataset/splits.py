from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..errors import BadFractions, EmptyIndexSet
from .store import SliceRecordStore

SLICE = "slice"
SUBJECT = "subject"


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0
    granularity: str = SLICE

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise BadFractions(f"fractions {self.fractions}")
        if abs(math.fsum(self.fractions) - 1.0) > 1e-12:
            raise BadFractions(f"fractions {self.fractions} do not sum to 1")
        if self.granularity not in (SLICE, SUBJECT):
            raise BadFractions(f"granularity {self.granularity!r}")


class Split(NamedTuple):
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def split_sizes(n: int, fractions) -> tuple[int, int, int]:
    """round(f * n) for train and val (half-up); test takes the remainder."""
    n_train = math.floor(fractions[0] * n + 0.5)
    n_val = min(math.floor(fractions[1] * n + 0.5), n - n_train)
    return n_train, n_val, n - n_train - n_val


def split_indices(n: int, spec: SplitSpec) -> Split:
    if n < 1:
        raise EmptyIndexSet("cannot split an empty store")
    a, b, _ = split_sizes(n, spec.fractions)
    perm = np.random.default_rng(spec.seed).permutation(n)
    return Split(np.sort(perm[:a]), np.sort(perm[a : a + b]), np.sort(perm[a + b :]))


def split(store: SliceRecordStore, spec: SplitSpec) -> Split:
    """Partition record indices into train / val / test.

    At subject granularity whole subjects are assigned in a seeded order,
    filling train, then val, then test, so the sizes only approximate the
    requested fractions.
    """
    n = len(store)
    if spec.granularity == SLICE:
        return split_indices(n, spec)
    if n < 1:
        raise EmptyIndexSet("cannot split an empty store")

    hashes = store.subject_hashes
    subjects = np.unique(hashes)
    order = np.random.default_rng(spec.seed).permutation(len(subjects))
    a, b, _ = split_sizes(n, spec.fractions)
    side = {}
    filled = 0
    for s in subjects[order]:
        side[int(s)] = 0 if filled < a else (1 if filled < a + b else 2)
        filled += int(np.count_nonzero(hashes == s))
    sides = np.array([side[int(h)] for h in hashes])
    idx = np.arange(n)
    return Split(idx[sides == 0], idx[sides == 1], idx[sides == 2])
