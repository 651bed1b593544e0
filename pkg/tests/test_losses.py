import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from xmod_align.errors import DimensionMismatchError, LabelOutOfRangeError
from xmod_align.linalg import gram_matrix, normalize_rows
from xmod_align.losses import (
    LossConfig,
    PhaseState,
    anti_visual_loss,
    class_prototypes,
    cross_entropy_from_logits,
    draw_shuffle_indices,
    fuse_matrix,
    ra_loss,
    total_loss,
    visual_loss,
    vlm_loss,
)

# Independently computed: -log sigmoid(1) = log(1 + e^-1).
LOSS_ONE_VS_ORTHOGONAL = 0.3132616875182228
# Independently computed (cross-checked against scipy.stats.entropy):
# KL(softmax(1,0) || (0.5,0.5)) = log 2 - H(softmax(1,0)).
KL_ONE_ZERO_VS_UNIFORM = 0.11094407167172735


class TestVlmLoss:
    def test_single_class_zero_loss(self):
        f = np.array([[1.0, 0.0]])
        loss, probs = vlm_loss(f, f, [0], tau=1.0)
        assert loss == 0.0
        np.testing.assert_array_equal(probs, [[1.0]])

    def test_one_aligned_one_orthogonal(self):
        f = np.array([[1.0, 0.0]])
        t = np.array([[1.0, 0.0], [0.0, 1.0]])
        loss, _ = vlm_loss(f, t, [0], tau=1.0)
        assert loss == pytest.approx(LOSS_ONE_VS_ORTHOGONAL, abs=1e-12)

    def test_equidistant_gives_log2(self):
        f = np.array([[0.0, 1.0]])
        t = np.array([[0.6, 0.8], [-0.6, 0.8]])
        loss, _ = vlm_loss(f, t, [0], tau=0.07)
        assert loss == pytest.approx(np.log(2.0), abs=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            vlm_loss(np.ones((1, 3)), np.ones((2, 4)), [0], 1.0)

    def test_label_out_of_range(self):
        with pytest.raises(LabelOutOfRangeError):
            vlm_loss(np.ones((1, 2)), np.ones((3, 2)), [3], 1.0)

    @given(
        arrays(np.float64, (4, 6), elements=st.floats(-2, 2)),
        arrays(np.float64, (3, 6), elements=st.floats(-2, 2)),
    )
    @settings(max_examples=40)
    def test_loss_nonnegative_probs_valid(self, f, t):
        if np.any(np.linalg.norm(f, axis=1) < 1e-6):
            return
        if np.any(np.linalg.norm(t, axis=1) < 1e-6):
            return
        loss, probs = vlm_loss(
            normalize_rows(f), normalize_rows(t), [0, 1, 2, 0], tau=0.07
        )
        assert loss >= 0.0
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


class TestVisualLoss:
    def test_prototype_weights_beat_uniform_bound(self, rng):
        anchors = np.eye(3)
        labels = np.repeat(np.arange(3), 4)
        f = normalize_rows(anchors[labels] + 0.05 * rng.standard_normal((12, 3)))
        w = class_prototypes(f, labels, 3)
        assert visual_loss(f, w, labels, tau=0.07) < np.log(3)

    def test_text_weights_reduce_to_vlm(self, toy_instance):
        f, t, labels = toy_instance
        expected, _ = vlm_loss(f, t, labels, 0.07)
        assert visual_loss(f, t, labels, 0.07) == expected

    def test_identical_weights_give_log_c(self, rng):
        f = normalize_rows(rng.standard_normal((4, 8)))
        w = np.tile(normalize_rows(rng.standard_normal((1, 8))), (5, 1))
        got = visual_loss(f, w, [0, 1, 2, 3], tau=0.01)
        assert got == pytest.approx(np.log(5), abs=1e-12)


class TestAntiVisual:
    def test_ordered_indices_reduce_to_visual_loss(self, rng):
        f = normalize_rows(rng.standard_normal((5, 8)))
        labels = np.arange(5)
        got = anti_visual_loss(
            f, labels, "class_shuffle", tau=0.07, indices=np.arange(5)
        )
        assert got == pytest.approx(visual_loss(f, f, labels, 0.07), abs=1e-14)

    def test_identical_features_give_log_c(self, rng):
        f = np.tile(normalize_rows(rng.standard_normal((1, 8))), (5, 1))
        labels = np.arange(5)
        for trial in range(5):
            got = anti_visual_loss(
                f, labels, "class_shuffle", rng=np.random.default_rng(trial), tau=0.01
            )
            assert got == pytest.approx(np.log(5), abs=1e-12)

    def test_class_shuffle_against_brute_force(self, rng):
        f = normalize_rows(rng.standard_normal((5, 8)))
        labels = np.arange(5)
        indices = np.array([3, 0, 4, 1, 2])
        a_v = gram_matrix(f)
        # brute force: explicit softmax over the selected gram columns
        expect = 0.0
        for i in range(5):
            logits = a_v[i, indices] / 0.07
            logits -= logits.max()
            expect += -np.log(np.exp(logits[labels[i]]) / np.exp(logits).sum())
        expect /= 5
        got = anti_visual_loss(f, labels, "class_shuffle", tau=0.07, indices=indices)
        assert got == pytest.approx(expect, rel=1e-12)

    def test_neg_lv_is_negated_prototype_loss(self, rng):
        f = normalize_rows(rng.standard_normal((10, 8)))
        labels = np.repeat(np.arange(5), 2)
        protos = class_prototypes(f, labels, 5)
        assert anti_visual_loss(f, labels, "neg_lv", tau=0.07) == pytest.approx(
            -visual_loss(f, protos, labels, 0.07), abs=1e-14
        )

    def test_noise_proto_uses_given_weights(self, rng):
        f = normalize_rows(rng.standard_normal((5, 8)))
        w = normalize_rows(rng.standard_normal((5, 8)))
        labels = np.arange(5)
        got = anti_visual_loss(f, labels, "noise_proto", tau=0.07, noise_weights=w)
        assert got == visual_loss(f, w, labels, 0.07)

    def test_shuffle_indices_cover_without_replacement(self, rng):
        labels = np.repeat(np.arange(5), 3)
        idx = draw_shuffle_indices(labels, rng)
        assert len(idx) == 5
        assert len(set(idx.tolist())) == 5


class TestFuse:
    def _mats(self, rng, n=5):
        a_v = gram_matrix(normalize_rows(rng.standard_normal((n, 8))))
        a_t = gram_matrix(normalize_rows(rng.standard_normal((n, 8))))
        return a_v, a_t, np.arange(n)

    def test_epoch_zero_is_visual_anchor(self, rng):
        a_v, a_t, labels = self._mats(rng)
        got = fuse_matrix(a_v, a_t, labels, PhaseState(0, 10, 5))
        np.testing.assert_array_equal(got, a_v)

    def test_endpoint_is_text_exactly(self, rng):
        a_v, a_t, labels = self._mats(rng)
        got = fuse_matrix(a_v, a_t, labels, PhaseState(10, 10, 5))
        np.testing.assert_array_equal(got, a_t[np.ix_(labels, labels)])

    def test_midpoint_entry(self):
        a_v = np.array([[0.2]])
        a_t = np.array([[0.8]])
        got = fuse_matrix(a_v, a_t, [0], PhaseState(5, 10, 5))
        assert got[0, 0] == pytest.approx(0.5, abs=1e-15)


class TestRaLoss:
    def test_identity_zero(self, rng):
        a = gram_matrix(normalize_rows(rng.standard_normal((6, 8))))
        assert abs(ra_loss(a, a, 1.0)) < 1e-12

    def test_frozen_kl_row(self):
        got = ra_loss(np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]]), 1.0)
        assert got == pytest.approx(KL_ONE_ZERO_VS_UNIFORM, abs=1e-12)

    @given(
        arrays(np.float64, (4, 4), elements=st.floats(-1, 1)),
        arrays(np.float64, (4, 4), elements=st.floats(-1, 1)),
    )
    @settings(max_examples=60)
    def test_nonnegative(self, a, b):
        assert ra_loss(a, b, 1.0) >= -1e-15

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            ra_loss(np.eye(2), np.eye(3), 1.0)


class TestTotalLoss:
    def test_late_epoch_is_vlm_only(self):
        cfg = LossConfig()
        total, br = total_loss(1.7, 9.0, 9.0, cfg, PhaseState(200, 250, 150))
        assert total == 1.7
        assert br.ad == 0.0 and br.ra == 0.0
        assert not br.aux_active

    def test_disabled_auxiliaries(self):
        cfg = LossConfig(lam=0.0, beta=0.0)
        for epoch in (0, 100, 249):
            total, _ = total_loss(1.3, 5.0, 5.0, cfg, PhaseState(epoch, 250, 150))
            assert total == 1.3

    def test_weighted_sum(self):
        cfg = LossConfig(lam=0.1, beta=3.0)
        total, br = total_loss(1.0, 0.5, 0.2, cfg, PhaseState(0, 250, 150))
        assert total == pytest.approx(1.65, abs=1e-15)
        assert br.total == total

    def test_custom_window(self):
        cfg = LossConfig(lam=0.1, beta=3.0)
        total, _ = total_loss(1.0, 0.5, 0.2, cfg, PhaseState(10, 250, 150), window=(0, 5))
        assert total == 1.0
        total, _ = total_loss(1.0, 0.5, 0.2, cfg, PhaseState(3, 250, 150), window=(0, 5))
        assert total == pytest.approx(1.65, abs=1e-15)

    @given(st.floats(0, 1), st.floats(0, 5))
    @settings(max_examples=30)
    def test_linear_in_weights(self, lam, beta):
        cfg = LossConfig(lam=lam, beta=beta)
        total, _ = total_loss(1.0, 0.5, 0.2, cfg, PhaseState(0, 250, 150))
        assert total == pytest.approx(1.0 + lam * 0.5 + beta * 0.2, abs=1e-12)


class TestPhaseState:
    def test_bounds(self):
        with pytest.raises(ValueError):
            PhaseState(-1, 10, 5)
        with pytest.raises(ValueError):
            PhaseState(11, 10, 5)
        with pytest.raises(ValueError):
            PhaseState(0, 10, 11)

    def test_initial_phase_flag(self):
        assert PhaseState(149, 250, 150).in_initial_phase
        assert not PhaseState(150, 250, 150).in_initial_phase


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss, probs = cross_entropy_from_logits(np.zeros((2, 4)), [0, 3], 1.0)
        assert loss == pytest.approx(np.log(4), abs=1e-12)
        np.testing.assert_allclose(probs, 0.25)
