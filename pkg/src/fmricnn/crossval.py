"""Repeated-run evaluation: disjoint k-fold or reshuffled 60/20/20 splits."""
from __future__ import annotations

import csv
import io
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import SliceRecordStore, Split, SplitSpec, compute_mean_image, split
from .errors import EmptyResults, TooFewRecords, UsageError
from .nn import NetworkConfig, build_network
from .trainer import MetricsLog, TrainConfig, evaluate, train

DISJOINT = "disjoint-folds"
RESHUFFLED = "reshuffled-splits"

# Run accuracies and the mean as printed in the published five-run table.
PUBLISHED_RUN_ACCURACIES = (96.858, 96.857, 96.854, 96.863, 96.8588)
PUBLISHED_MEAN = 96.8588


def derive_seed(base: int, *keys: int) -> int:
    """Deterministic 64-bit seed for a (base, key...) pair via SeedSequence."""
    return int(np.random.SeedSequence([base & (2**64 - 1), *keys]).generate_state(1, np.uint64)[0])


@dataclass
class FoldResult:
    run_index: int
    test_accuracy: float
    seed: int
    metrics: MetricsLog | None = None


@dataclass
class CvSummary:
    accuracies: list[float]
    mean: float
    std: float
    mode: str = DISJOINT
    seeds: list[int] = field(default_factory=list)
    reference_mean: float | None = None

    @property
    def reference_divergence(self) -> float | None:
        if self.reference_mean is None:
            return None
        return self.reference_mean - self.mean

    def flags(self, tol: float = 1e-9) -> list[str]:
        d = self.reference_divergence
        if d is None or abs(d) <= tol:
            return []
        return [f"reported mean {self.reference_mean!r} differs from the arithmetic mean "
                f"{self.mean!r} of the runs by {d:+.6g}"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "seed", "test_accuracy"])
        seeds = self.seeds or [""] * len(self.accuracies)
        for i, (s, a) in enumerate(zip(seeds, self.accuracies), start=1):
            w.writerow([i, s, repr(a)])
        w.writerow(["mean", "", repr(self.mean)])
        w.writerow(["std", "", repr(self.std)])
        if self.reference_mean is not None:
            w.writerow(["reference_mean", "", repr(self.reference_mean)])
            w.writerow(["reference_divergence", "", repr(self.reference_divergence)])
        for note in self.flags():
            w.writerow(["flag", "", note])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def summarize(results: Sequence[FoldResult | float], mode: str = DISJOINT,
              reference_mean: float | None = None) -> CvSummary:
    """Exact mean (``fsum``) and population standard deviation, ordered by run."""
    if not results:
        raise EmptyResults("no runs to summarize")
    if isinstance(results[0], FoldResult):
        results = sorted(results, key=lambda r: r.run_index)
        acc = [float(r.test_accuracy) for r in results]
        seeds = [r.seed for r in results]
    else:
        acc, seeds = [float(a) for a in results], []
    mean = math.fsum(acc) / len(acc)
    std = statistics.pstdev(acc) if len(acc) > 1 else 0.0
    return CvSummary(acc, mean, std, mode, seeds, reference_mean)


def fold_assignment(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Partition a seeded permutation of range(n) into k near-equal folds."""
    if k < 2:
        raise UsageError(f"k must be >= 2, got {k}")
    if n < 3 * k:
        raise TooFewRecords(f"{n} records cannot fill {k} folds")
    perm = np.random.default_rng(derive_seed(seed, 0xF01D)).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def run_split(store: SliceRecordStore, k: int, run: int, seed: int, mode: str) -> Split:
    """Indices for one run.

    Disjoint mode: fold ``run`` is test, fold ``run + 1`` validation, the rest
    train (60/20/20 for k = 5). Reshuffled mode: a fresh 60/20/20 split.
    """
    if mode == DISJOINT:
        if k < 3:
            raise UsageError(f"disjoint folds need k >= 3 (test, validation, train), got {k}")
        folds = fold_assignment(len(store), k, seed)
        val_fold = (run + 1) % k
        rest = [f for i, f in enumerate(folds) if i not in (run, val_fold)]
        return Split(np.sort(np.concatenate(rest)), folds[val_fold], folds[run])
    if mode == RESHUFFLED:
        if len(store) < 3:
            raise TooFewRecords("need at least 3 records")
        return split(store, SplitSpec((0.6, 0.2, 0.2), derive_seed(seed, run, 0x5B17)))
    raise UsageError(f"unknown cross-validation mode {mode!r}")


def run_fold(
    store: SliceRecordStore,
    k: int,
    run: int,
    config: TrainConfig,
    mode: str = DISJOINT,
    net_config: NetworkConfig | None = None,
    use_best: bool = True,
) -> FoldResult:
    """Train and test one run from scratch; reproducible on its own."""
    run_seed = derive_seed(config.seed, run)
    parts = run_split(store, k, run, config.seed, mode)
    net_config = net_config or NetworkConfig(input_shape=(1, store.height, store.width))
    net = build_network(net_config, seed=derive_seed(run_seed, 1))
    mean = compute_mean_image(store, parts.train)
    net, log = train(net, store, parts, mean, replace(config, seed=derive_seed(run_seed, 2)))
    if use_best and net.best_state is not None:
        net.load_state_dict(net.best_state)
    _, acc = evaluate(net, store, parts.test, mean)
    return FoldResult(run, acc, run_seed, log)


def _run_fold_star(args):
    return run_fold(*args)


def run_cv(
    store: SliceRecordStore,
    k: int,
    config: TrainConfig,
    mode: str = DISJOINT,
    net_config: NetworkConfig | None = None,
    threads: int = 1,
    reference_mean: float | None = None,
) -> tuple[CvSummary, list[FoldResult]]:
    if k < 2:
        raise UsageError(f"k must be >= 2, got {k}")
    if mode == DISJOINT:
        run_split(store, k, 0, config.seed, mode)  # validate k and size up front
    jobs = [(store, k, run, config, mode, net_config) for run in range(k)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_fold_star, jobs))
    else:
        results = [run_fold(*job) for job in jobs]
    return summarize(results, mode, reference_mean), results
