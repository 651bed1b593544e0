"""Losses for cross-modal fine-tuning and its auxiliary objectives.

Four losses are implemented:

* ``vlm_loss``     -- cross-entropy between visual features and class text
  features (the fine-tuning objective).
* ``visual_loss``  -- the same cross-entropy against arbitrary classifier
  weights (visual learning).
* ``anti_visual_loss`` -- perturbs visual learning by classifying against
  class-shuffled sample features (or one of the alternative strategies).
* ``ra_loss``      -- KL divergence pulling the visual similarity matrix
  toward a schedule-fused visual/text target.

``total_loss`` combines them with the two-phase schedule: auxiliary terms
are only active during an initial window of epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    InsufficientSamplesError,
    LabelOutOfRangeError,
)
from .linalg import gram_matrix, log_softmax_rows, normalize_rows, softmax_rows

SVL_STRATEGIES = ("off", "class_shuffle", "neg_lv", "noise_proto")
RA_STRATEGIES = ("off", "fused", "only_vision", "only_text")


@dataclass(frozen=True)
class PhaseState:
    """Position within the two-phase training schedule."""

    epoch: int
    total_epochs: int
    init_epochs: int

    def __post_init__(self):
        # epoch == total_epochs is allowed so the schedule endpoint is
        # representable; training itself only visits [0, total_epochs).
        if not 0 <= self.epoch <= self.total_epochs:
            raise ValueError(f"epoch {self.epoch} outside [0, {self.total_epochs}]")
        if not 0 <= self.init_epochs <= self.total_epochs:
            raise ValueError(
                f"init_epochs {self.init_epochs} outside [0, {self.total_epochs}]"
            )

    @property
    def in_initial_phase(self) -> bool:
        return self.epoch < self.init_epochs


@dataclass(frozen=True)
class LossConfig:
    """Weights and temperatures for the combined loss."""

    tau: float = 0.01
    tau_ra: float = 1.0
    lam: float = 0.1
    beta: float = 3.0
    svl_strategy: str = "class_shuffle"
    ra_strategy: str = "fused"

    def __post_init__(self):
        if self.tau <= 0 or self.tau_ra <= 0:
            raise ValueError("temperatures must be > 0")
        if self.lam < 0 or self.beta < 0:
            raise ValueError("loss weights must be >= 0")
        if self.svl_strategy not in SVL_STRATEGIES:
            raise ValueError(f"unknown svl strategy {self.svl_strategy!r}")
        if self.ra_strategy not in RA_STRATEGIES:
            raise ValueError(f"unknown ra strategy {self.ra_strategy!r}")


def _check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelOutOfRangeError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    return labels


def cross_entropy_from_logits(
    logits: np.ndarray, labels: np.ndarray, tau: float
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of temperature-scaled logits; also returns probs."""
    labels = _check_labels(labels, logits.shape[1])
    logp = log_softmax_rows(logits, tau)
    loss = -float(np.mean(logp[np.arange(len(labels)), labels]))
    return loss, np.exp(logp)


def vlm_loss(
    f: np.ndarray, t: np.ndarray, labels: np.ndarray, tau: float
) -> tuple[float, np.ndarray]:
    """Cross-entropy of visual features against class text features.

    Returns the scalar loss and the full softmax probability matrix.
    """
    f = np.asarray(f, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if f.shape[1] != t.shape[1]:
        raise DimensionMismatchError(
            f"feature dims {f.shape[1]} and {t.shape[1]} differ"
        )
    return cross_entropy_from_logits(f @ t.T, labels, tau)


def visual_loss(
    f: np.ndarray, w: np.ndarray, labels: np.ndarray, tau: float
) -> float:
    """Cross-entropy of visual features against classifier weight rows."""
    loss, _ = vlm_loss(f, w, labels, tau)
    return loss


def class_prototypes(f: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Per-class mean feature, re-normalized: the centroid classifier."""
    labels = _check_labels(labels, num_classes)
    protos = np.zeros((num_classes, f.shape[1]))
    for c in range(num_classes):
        rows = f[labels == c]
        if len(rows) == 0:
            raise InsufficientSamplesError(f"class {c} has no samples")
        protos[c] = rows.mean(axis=0)
    return normalize_rows(protos)


def draw_shuffle_indices(
    labels: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw one support-sample index per class slot, without replacement."""
    labels = np.asarray(labels)
    num_classes = int(labels.max()) + 1 if labels.size else 0
    if len(labels) < num_classes:
        raise InsufficientSamplesError(
            f"need >= {num_classes} support samples, got {len(labels)}"
        )
    return rng.choice(len(labels), size=num_classes, replace=False)


def anti_visual_loss(
    f_support: np.ndarray,
    labels: np.ndarray,
    strategy: str,
    rng: np.random.Generator | None = None,
    tau: float = 0.01,
    a_v: np.ndarray | None = None,
    indices: np.ndarray | None = None,
    noise_weights: np.ndarray | None = None,
) -> float:
    """Anti-visual loss under one of the perturbation strategies.

    ``class_shuffle`` classifies each sample against randomly chosen support
    features (one per class slot); ``neg_lv`` is the negated prototype
    visual loss; ``noise_proto`` uses normalized Gaussian weights.  The
    random draw can be pinned via ``indices`` / ``noise_weights`` so a
    training step and its gradient see identical randomness.
    """
    f_support = np.asarray(f_support, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    num_classes = int(labels.max()) + 1

    if strategy == "class_shuffle":
        if indices is None:
            if rng is None:
                raise ValueError("class_shuffle needs an rng or explicit indices")
            indices = draw_shuffle_indices(labels, rng)
        if a_v is None:
            a_v = gram_matrix(f_support)
        logits = a_v[:, indices]
        loss, _ = cross_entropy_from_logits(logits, labels, tau)
        return loss
    if strategy == "neg_lv":
        protos = class_prototypes(f_support, labels, num_classes)
        return -visual_loss(f_support, protos, labels, tau)
    if strategy == "noise_proto":
        if noise_weights is None:
            if rng is None:
                raise ValueError("noise_proto needs an rng or explicit weights")
            noise_weights = normalize_rows(
                rng.standard_normal((num_classes, f_support.shape[1]))
            )
        return visual_loss(f_support, noise_weights, labels, tau)
    raise ValueError(f"unknown strategy {strategy!r}")


def fuse_matrix(
    a_v_anchor: np.ndarray,
    a_t: np.ndarray,
    labels: np.ndarray,
    phase: PhaseState,
) -> np.ndarray:
    """Epoch-scheduled convex combination of visual and text similarities.

    The result is a constant target: callers must not backpropagate
    through it.
    """
    labels = _check_labels(labels, a_t.shape[0])
    w = phase.epoch / phase.total_epochs
    a_t_ll = a_t[np.ix_(labels, labels)]
    if w == 0.0:
        return a_v_anchor.copy()
    if w == 1.0:
        return a_t_ll.copy()
    return (1.0 - w) * a_v_anchor + w * a_t_ll


def ra_loss(
    a_v_current: np.ndarray, a_target: np.ndarray, tau_ra: float
) -> float:
    """Mean row-wise KL divergence between softmaxed similarity matrices."""
    a_v_current = np.asarray(a_v_current, dtype=np.float64)
    a_target = np.asarray(a_target, dtype=np.float64)
    if a_v_current.shape != a_target.shape:
        raise DimensionMismatchError(
            f"shapes {a_v_current.shape} and {a_target.shape} differ"
        )
    log_p = log_softmax_rows(a_v_current, tau_ra)
    log_q = log_softmax_rows(a_target, tau_ra)
    p = np.exp(log_p)
    return float(np.mean(np.sum(p * (log_p - log_q), axis=1)))


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term record of one combined-loss evaluation."""

    vlm: float
    ad: float
    ra: float
    lam: float
    beta: float
    aux_active: bool
    total: float = field(init=False)

    def __post_init__(self):
        if self.aux_active:
            total = self.vlm + self.beta * self.ra + self.lam * self.ad
        else:
            total = self.vlm
        object.__setattr__(self, "total", total)


def total_loss(
    vlm: float,
    ad: float,
    ra: float,
    config: LossConfig,
    phase: PhaseState,
    window: tuple[int, int] | None = None,
) -> tuple[float, LossBreakdown]:
    """Two-phase combined loss.

    ``window`` is the half-open epoch range in which the auxiliary terms are
    active; it defaults to the initial phase ``[0, init_epochs)``.
    """
    if window is None:
        window = (0, phase.init_epochs)
    active = window[0] <= phase.epoch < window[1]
    breakdown = LossBreakdown(
        vlm=vlm,
        ad=ad if active else 0.0,
        ra=ra if active else 0.0,
        lam=config.lam,
        beta=config.beta,
        aux_active=active,
    )
    return breakdown.total, breakdown
