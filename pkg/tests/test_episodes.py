import numpy as np
import pytest

from xmod_align.data_io import EmbeddingDataset
from xmod_align.episodes import (
    BenchmarkConfig,
    BenchmarkResult,
    classify,
    run_benchmark,
    sample_episode,
)
from xmod_align.errors import InsufficientClassesError, InsufficientSamplesError
from xmod_align.linalg import normalize_rows
from xmod_align.trainer import TrainConfig


def tiny_dataset(rng, classes=8, per_class=20, dim=16):
    anchors = normalize_rows(rng.standard_normal((classes, dim)))
    labels = np.repeat(np.arange(classes), per_class)
    feats = normalize_rows(anchors[labels] + 0.1 * rng.standard_normal((len(labels), dim)))
    return EmbeddingDataset(
        features=feats,
        labels=labels,
        class_names=[f"c{i}" for i in range(classes)],
        text_features=anchors,
    )


class TestSampleEpisode:
    def test_shapes_five_way_one_shot(self, rng):
        ds = tiny_dataset(rng)
        ep = sample_episode(ds, 5, 1, 15, rng)
        assert ep.support_x.shape == (5, 16)
        assert ep.query_x.shape == (75, 16)
        assert set(ep.support_y.tolist()) == set(range(5))
        assert np.all(np.bincount(ep.query_y) == 15)

    def test_exhaustive_partition(self, rng):
        ds = tiny_dataset(rng, classes=4, per_class=6)
        ep = sample_episode(ds, 4, 2, 4, rng)
        assert len(ep.support_y) + len(ep.query_y) == ds.count

    def test_insufficient_classes(self, rng):
        ds = tiny_dataset(rng, classes=3)
        with pytest.raises(InsufficientClassesError):
            sample_episode(ds, 5, 1, 15, rng)

    def test_insufficient_samples(self, rng):
        ds = tiny_dataset(rng, classes=6, per_class=10)
        with pytest.raises(InsufficientSamplesError):
            sample_episode(ds, 5, 5, 15, rng)

    def test_support_query_disjoint(self, rng):
        ds = tiny_dataset(rng)
        ep = sample_episode(ds, 5, 3, 5, rng)
        support = {tuple(row) for row in ep.support_x}
        query = {tuple(row) for row in ep.query_x}
        assert not support & query


class TestClassify:
    def test_exact_match(self):
        t = np.eye(3)
        assert classify(t[2][None, :], t)[0] == 2

    def test_tie_breaks_low(self):
        t = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert classify(np.array([[1.0, 0.0]]), t)[0] == 0

    def test_against_brute_force(self, rng):
        f = normalize_rows(rng.standard_normal((10, 8)))
        t = normalize_rows(rng.standard_normal((3, 8)))
        got = classify(f, t)
        for i in range(10):
            sims = [f[i] @ t[c] for c in range(3)]
            assert got[i] == int(np.argmax(sims))


class TestBenchmarkResult:
    def test_ci95_formula(self, rng):
        accs = rng.uniform(40, 90, size=50)
        res = BenchmarkResult.from_accuracies(accs)
        expected = 1.96 * np.std(accs, ddof=1) / np.sqrt(50)
        assert abs(res.ci95 - expected) < 1e-12
        assert res.mean == pytest.approx(np.mean(accs), abs=1e-12)

    def test_single_task_zero_ci(self):
        res = BenchmarkResult.from_accuracies(np.array([80.0]))
        assert res.ci95 == 0.0


class TestRunBenchmark:
    def test_perfect_prototypes_without_training(self, rng):
        anchors = normalize_rows(rng.standard_normal((8, 16)))
        labels = np.repeat(np.arange(8), 20)
        ds = EmbeddingDataset(
            features=anchors[labels],
            labels=labels,
            class_names=[f"c{i}" for i in range(8)],
            text_features=anchors,
        )
        bench = BenchmarkConfig(task_count=6, train=False)
        res = run_benchmark(ds, bench, TrainConfig())
        assert res.mean == 100.0
        assert res.ci95 == 0.0

    def test_repeat_run_identical(self, rng):
        ds = tiny_dataset(rng)
        bench = BenchmarkConfig(task_count=4, master_seed=9)
        cfg = TrainConfig(epochs=20)
        r1 = run_benchmark(ds, bench, cfg)
        r2 = run_benchmark(ds, bench, cfg)
        np.testing.assert_array_equal(r1.accuracies, r2.accuracies)
        assert r1.mean == r2.mean and r1.ci95 == r2.ci95

    def test_parallel_matches_serial(self, rng):
        ds = tiny_dataset(rng)
        bench = BenchmarkConfig(task_count=6, master_seed=2, compute_gap=True)
        cfg = TrainConfig(epochs=20)
        serial = run_benchmark(ds, bench, cfg, parallel=1)
        parallel = run_benchmark(ds, bench, cfg, parallel=4)
        np.testing.assert_array_equal(serial.accuracies, parallel.accuracies)
        np.testing.assert_array_equal(serial.gaps, parallel.gaps)
