"""N-way K-shot episode sampling, query evaluation, and the benchmark harness."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .adapter import apply_adapter
from .data_io import EmbeddingDataset
from .diagnostics import gap_sweep
from .errors import (
    DimensionMismatchError,
    InsufficientClassesError,
    InsufficientSamplesError,
)
from .trainer import TrainConfig, train_episode


@dataclass
class Episode:
    """One N-way K-shot task with disjoint support and query samples."""

    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray
    class_ids: np.ndarray  # the N sampled global class indices


def sample_episode(
    dataset: EmbeddingDataset,
    n_way: int,
    k_shot: int,
    m_query: int,
    rng: np.random.Generator,
) -> Episode:
    """Uniformly sample classes and per-class samples without replacement."""
    if dataset.num_classes < n_way:
        raise InsufficientClassesError(
            f"need {n_way} classes, dataset has {dataset.num_classes}"
        )
    counts = dataset.samples_per_class()
    eligible = np.flatnonzero(counts >= k_shot + m_query)
    if len(eligible) < n_way:
        raise InsufficientSamplesError(
            f"only {len(eligible)} classes have >= {k_shot + m_query} samples"
        )
    class_ids = np.sort(rng.choice(eligible, size=n_way, replace=False))

    support_rows, query_rows = [], []
    support_y, query_y = [], []
    for slot, cls in enumerate(class_ids):
        rows = np.flatnonzero(dataset.labels == cls)
        chosen = rng.choice(rows, size=k_shot + m_query, replace=False)
        support_rows.extend(chosen[:k_shot])
        query_rows.extend(chosen[k_shot:])
        support_y.extend([slot] * k_shot)
        query_y.extend([slot] * m_query)

    return Episode(
        support_x=dataset.features[support_rows],
        support_y=np.array(support_y, dtype=np.intp),
        query_x=dataset.features[query_rows],
        query_y=np.array(query_y, dtype=np.intp),
        class_ids=class_ids,
    )


def classify(
    f_query: np.ndarray, t: np.ndarray, tau: float = 0.01
) -> np.ndarray:
    """Argmax class per query row; ties break toward the lowest index."""
    if f_query.shape[1] != t.shape[1]:
        raise DimensionMismatchError(
            f"feature dims {f_query.shape[1]} and {t.shape[1]} differ"
        )
    del tau  # argmax is invariant to the temperature
    return np.argmax(f_query @ t.T, axis=1)


@dataclass
class BenchmarkResult:
    """Aggregated per-task accuracies (percent) with a 95% CI."""

    accuracies: np.ndarray
    mean: float
    ci95: float
    task_count: int
    gaps: np.ndarray | None = None
    gap_mean: float | None = None

    @staticmethod
    def from_accuracies(
        accuracies: np.ndarray, gaps: np.ndarray | None = None
    ) -> "BenchmarkResult":
        accuracies = np.asarray(accuracies, dtype=np.float64)
        n = len(accuracies)
        std = float(np.std(accuracies, ddof=1)) if n > 1 else 0.0
        return BenchmarkResult(
            accuracies=accuracies,
            mean=float(np.mean(accuracies)),
            ci95=1.96 * std / np.sqrt(n),
            task_count=n,
            gaps=None if gaps is None else np.asarray(gaps, dtype=np.float64),
            gap_mean=None if gaps is None else float(np.mean(gaps)),
        )


@dataclass(frozen=True)
class BenchmarkConfig:
    """Episode shape and run options for the benchmark harness."""

    n_way: int = 5
    k_shot: int = 1
    m_query: int = 15
    task_count: int = 800
    master_seed: int = 0
    train: bool = True
    compute_gap: bool = False
    gap_alphas: tuple[float, ...] = field(
        default_factory=lambda: tuple(np.round(np.arange(-1.0, 1.5001, 0.05), 10))
    )


def _run_task(
    dataset: EmbeddingDataset,
    bench: BenchmarkConfig,
    train_cfg: TrainConfig,
    task_index: int,
) -> tuple[float, float | None]:
    # Per-task stream: serial and parallel execution draw identically.
    rng = np.random.default_rng([bench.master_seed, task_index])
    episode = sample_episode(
        dataset, bench.n_way, bench.k_shot, bench.m_query, rng
    )
    text = dataset.text_features[episode.class_ids]
    f_query = episode.query_x
    if bench.train:
        task_train_cfg = replace(train_cfg, seed=int(rng.integers(2**31)))
        adapter, _ = train_episode(
            episode.support_x, episode.support_y, text, task_train_cfg
        )
        if adapter.branch in ("visual", "both"):
            f_query = apply_adapter(adapter, episode.query_x)
        if adapter.branch in ("text", "both"):
            text = apply_adapter(adapter, text)
    predictions = classify(f_query, text)
    acc = 100.0 * float(np.mean(predictions == episode.query_y))
    gap = None
    if bench.compute_gap:
        report = gap_sweep(
            f_query, episode.query_y, text,
            np.array(bench.gap_alphas), train_cfg.loss.tau,
        )
        gap = report.gap
    return acc, gap


def _run_task_args(args) -> tuple[float, float | None]:
    return _run_task(*args)


def run_benchmark(
    dataset: EmbeddingDataset,
    bench: BenchmarkConfig,
    train_cfg: TrainConfig,
    parallel: int = 1,
) -> BenchmarkResult:
    """Run ``task_count`` seeded episodes; deterministic per master seed.

    Results are gathered in task-index order, so parallel and serial
    execution produce identical output.
    """
    args = [
        (dataset, bench, train_cfg, t) for t in range(bench.task_count)
    ]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(pool.map(_run_task_args, args, chunksize=8))
    else:
        outcomes = [_run_task_args(a) for a in args]
    accuracies = np.array([acc for acc, _ in outcomes])
    gaps = (
        np.array([gap for _, gap in outcomes])
        if bench.compute_gap
        else None
    )
    return BenchmarkResult.from_accuracies(accuracies, gaps)
