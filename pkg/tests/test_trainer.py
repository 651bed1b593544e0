import numpy as np
import pytest
from dataclasses import replace

from xmod_align.episodes import sample_episode
from xmod_align.linalg import normalize_rows
from xmod_align.losses import LossConfig
from xmod_align.trainer import TrainConfig, disturb_phase_variant, train_episode


def small_config(**kw):
    defaults = dict(epochs=40, init_epochs=24, seed=3)
    defaults.update(kw)
    return TrainConfig(**defaults)


@pytest.fixture
def episode_data(rng):
    x = normalize_rows(rng.standard_normal((5, 16)))
    y = np.arange(5)
    t = normalize_rows(rng.standard_normal((5, 16)))
    return x, y, t


def run(x, y, t, cfg):
    return train_episode(x, y, t, cfg)


class TestDeterminism:
    def test_same_seed_identical(self, episode_data):
        x, y, t = episode_data
        a1, tr1 = run(x, y, t, small_config())
        a2, tr2 = run(x, y, t, small_config())
        np.testing.assert_array_equal(a1.down, a2.down)
        np.testing.assert_array_equal(a1.up, a2.up)
        assert tr1.total == tr2.total

    def test_different_seed_differs(self, episode_data):
        x, y, t = episode_data
        a1, _ = run(x, y, t, small_config(seed=3))
        a2, _ = run(x, y, t, small_config(seed=4))
        assert not np.array_equal(a1.down, a2.down)


class TestPlainFineTuneEquivalence:
    def test_zero_weights_match_plain(self, episode_data):
        x, y, t = episode_data
        plain_loss = LossConfig(lam=0.0, beta=0.0)
        a1, _ = run(x, y, t, small_config(loss=plain_loss))
        # same seed with auxiliaries enabled but the window emptied
        a2, _ = run(x, y, t, disturb_phase_variant(small_config(), "no"))
        np.testing.assert_array_equal(a1.down, a2.down)
        np.testing.assert_array_equal(a1.up, a2.up)

    def test_init_epochs_zero_matches_plain(self, episode_data):
        x, y, t = episode_data
        plain, _ = run(x, y, t, small_config(loss=LossConfig(lam=0.0, beta=0.0)))
        gated, _ = run(x, y, t, small_config(init_epochs=0))
        np.testing.assert_array_equal(plain.down, gated.down)
        np.testing.assert_array_equal(plain.up, gated.up)

    def test_auxiliaries_change_the_run(self, episode_data):
        x, y, t = episode_data
        plain, _ = run(x, y, t, small_config(loss=LossConfig(lam=0.0, beta=0.0)))
        full, _ = run(x, y, t, small_config())
        assert not np.array_equal(plain.up, full.up)


class TestPhaseVariants:
    def test_windows(self):
        cfg = TrainConfig(epochs=250)
        assert disturb_phase_variant(cfg, "no").resolved_window == (0, 0)
        assert disturb_phase_variant(cfg, "all").resolved_window == (0, 250)
        assert disturb_phase_variant(cfg, "begin").resolved_window == (0, 150)
        assert disturb_phase_variant(cfg, "middle").resolved_window == (50, 200)
        assert disturb_phase_variant(cfg, "last").resolved_window == (100, 250)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            disturb_phase_variant(TrainConfig(), "sometimes")

    def test_default_window_is_initial_three_fifths(self):
        assert TrainConfig(epochs=250).resolved_window == (0, 150)
        assert TrainConfig(epochs=250).resolved_init_epochs == 150


class TestTrajectory:
    def test_record_lengths(self, episode_data):
        x, y, t = episode_data
        cfg = small_config(record_snapshots=True)
        _, traj = run(x, y, t, cfg)
        assert len(traj.epochs) == cfg.epochs
        assert len(traj.vlm) == len(traj.ad) == len(traj.ra) == cfg.epochs
        assert len(traj.snapshots) == cfg.epochs
        assert all(0.0 <= a <= 1.0 for a in traj.support_acc)

    def test_no_snapshots_by_default(self, episode_data):
        x, y, t = episode_data
        _, traj = run(x, y, t, small_config())
        assert traj.snapshots == []

    def test_aux_terms_zero_outside_window(self, episode_data):
        x, y, t = episode_data
        cfg = small_config()
        _, traj = run(x, y, t, cfg)
        for epoch in range(cfg.resolved_window[1], cfg.epochs):
            assert traj.ad[epoch] == 0.0
            assert traj.ra[epoch] == 0.0
            assert traj.total[epoch] == traj.vlm[epoch]

    def test_support_loss_decreases_on_benchmark_tasks(self, default_dataset):
        # mean over a handful of tasks: the run must reduce the tuning loss
        initial, final = [], []
        for task in range(5):
            task_rng = np.random.default_rng([11, task])
            ep = sample_episode(default_dataset, 5, 1, 15, task_rng)
            t = default_dataset.text_features[ep.class_ids]
            cfg = TrainConfig(seed=int(task_rng.integers(2**31)))
            _, traj = train_episode(ep.support_x, ep.support_y, t, cfg)
            initial.append(traj.vlm[0])
            final.append(traj.vlm[-1])
        assert np.mean(final) < np.mean(initial)


class TestConfigValidation:
    def test_bad_eta(self):
        with pytest.raises(ValueError):
            TrainConfig(eta=0.0)

    def test_bad_init_epochs(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=10, init_epochs=11)

    def test_jitter_run_is_deterministic(self, episode_data):
        x, y, t = episode_data
        cfg = small_config(jitter_sigma=0.05)
        a1, _ = run(x, y, t, cfg)
        a2, _ = run(x, y, t, cfg)
        np.testing.assert_array_equal(a1.up, a2.up)
