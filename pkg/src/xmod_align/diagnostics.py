"""Alignment diagnostics: gap-shift sweep, cosine-shift tracing, and the
visual-learning loss-drop probe."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adapter import LowRankAdapter, apply_adapter, sgd_step
from .errors import DimensionMismatchError
from .gradients import accumulate_param_grads, visual_proto_grads
from .linalg import normalize_rows
from .losses import vlm_loss
from .trainer import TrainTrajectory


def gap_vector(f: np.ndarray, t_expanded: np.ndarray) -> np.ndarray:
    """Difference of modality means; ``t_expanded`` has one text row per sample."""
    f = np.asarray(f, dtype=np.float64)
    t_expanded = np.asarray(t_expanded, dtype=np.float64)
    if f.shape != t_expanded.shape:
        raise DimensionMismatchError(
            f"shapes {f.shape} and {t_expanded.shape} differ"
        )
    return f.mean(axis=0) - t_expanded.mean(axis=0)


def gap_shift(
    f: np.ndarray, t_expanded: np.ndarray, alpha: float
) -> tuple[np.ndarray, np.ndarray]:
    """Move both modalities along the gap direction by ``alpha`` and re-normalize."""
    delta = gap_vector(f, t_expanded)
    return (
        normalize_rows(f - alpha * delta),
        normalize_rows(t_expanded + alpha * delta),
    )


@dataclass
class GapReport:
    """Loss/accuracy curves over the shift grid plus the Gap metric."""

    alphas: np.ndarray
    losses: np.ndarray
    accuracies: np.ndarray
    gap_norm: float
    gap: float  # loss(0) - min_alpha loss(alpha)
    alpha_star: float

    def summary_line(self) -> str:
        """Acc / Gap pair at the unshifted state, table-style."""
        acc0 = float(self.accuracies[np.flatnonzero(self.alphas == 0.0)[0]])
        return f"{acc0:.2f} / {self.gap:.3f}"


def gap_sweep(
    f: np.ndarray,
    labels: np.ndarray,
    t_class: np.ndarray,
    alphas: np.ndarray,
    tau: float,
) -> GapReport:
    """Evaluate loss and accuracy along the gap-shift grid.

    The gap direction is computed against per-sample text expansion
    ``t_class[labels]``; classification uses one shifted row per class.
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    if not np.any(alphas == 0.0):
        raise ValueError("the alpha grid must contain 0")
    labels = np.asarray(labels, dtype=np.intp)
    delta = gap_vector(f, t_class[labels])

    losses = np.empty(len(alphas))
    accs = np.empty(len(alphas))
    for idx, alpha in enumerate(alphas):
        if alpha == 0.0:
            f_s, t_s = f, t_class
        else:
            f_s = normalize_rows(f - alpha * delta)
            t_s = normalize_rows(t_class + alpha * delta)
        loss, probs = vlm_loss(f_s, t_s, labels, tau)
        losses[idx] = loss
        accs[idx] = 100.0 * float(np.mean(np.argmax(probs, axis=1) == labels))

    zero_idx = int(np.flatnonzero(alphas == 0.0)[0])
    # losses within rounding noise of the minimum count as ties, and ties
    # break toward the smallest shift, so a flat curve keeps alpha_star at 0
    near = np.flatnonzero(losses <= losses.min() + 1e-12)
    best = int(near[np.argmin(np.abs(alphas[near]))])
    return GapReport(
        alphas=alphas,
        losses=losses,
        accuracies=accs,
        gap_norm=float(np.linalg.norm(delta)),
        gap=float(losses[zero_idx] - losses[best]),
        alpha_star=float(alphas[best]),
    )


@dataclass
class DeltaCosTrace:
    """Per-epoch mean cosine change among adapted support features."""

    epochs: list[int]
    same_class: list[float | None]  # None when no same-class pairs exist
    diff_class: list[float]
    has_same_class_pairs: bool


def delta_cos_trace(
    trajectory: TrainTrajectory,
    support_x: np.ndarray,
    support_y: np.ndarray,
) -> DeltaCosTrace:
    """Recompute consecutive-epoch cosine changes from adapter snapshots."""
    if not trajectory.snapshots:
        raise ValueError("trajectory has no snapshots; train with record_snapshots")
    y = np.asarray(support_y, dtype=np.intp)
    same = (y[:, None] == y[None, :]) & ~np.eye(len(y), dtype=bool)
    diff = (y[:, None] != y[None, :])
    has_same = bool(same.any())

    epochs, same_means, diff_means = [], [], []
    prev = None
    for epoch, snap in zip(trajectory.epochs, trajectory.snapshots):
        f = support_x if snap.branch == "text" else apply_adapter(snap, support_x)
        gram = f @ f.T
        if prev is not None:
            delta = gram - prev
            epochs.append(epoch)
            same_means.append(float(delta[same].mean()) if has_same else None)
            diff_means.append(float(delta[diff].mean()))
        prev = gram
    return DeltaCosTrace(
        epochs=epochs,
        same_class=same_means,
        diff_class=diff_means,
        has_same_class_pairs=has_same,
    )


@dataclass
class ProbeRecord:
    epoch: int
    vlm_before: float
    vlm_after: float

    @property
    def delta_vlm(self) -> float:
        return self.vlm_after - self.vlm_before


@dataclass
class ProbeReport:
    records: list[ProbeRecord]
    probe_steps: int
    eta_probe: float

    def fraction_negative(self, first_half_only: bool = False) -> float:
        records = self.records
        if first_half_only:
            records = records[: max(1, len(records) // 2)]
        return float(np.mean([r.delta_vlm < 0 for r in records]))


def visual_probe(
    trajectory: TrainTrajectory,
    support_x: np.ndarray,
    support_y: np.ndarray,
    text_features: np.ndarray,
    tau: float,
    probe_steps: int = 10,
    eta_probe: float = 1e-2,
) -> ProbeReport:
    """From each snapshot, run a few visual-learning steps and measure the
    resulting change in the fine-tuning loss.  Snapshots are never mutated."""
    if not trajectory.snapshots:
        raise ValueError("trajectory has no snapshots; train with record_snapshots")
    y = np.asarray(support_y, dtype=np.intp)
    records = []
    for epoch, snap in zip(trajectory.epochs, trajectory.snapshots):
        probe = snap.copy()
        adapt_visual = probe.branch in ("visual", "both")
        adapt_text = probe.branch in ("text", "both")

        def eval_vlm(adapter: LowRankAdapter) -> float:
            f = apply_adapter(adapter, support_x) if adapt_visual else support_x
            t = apply_adapter(adapter, text_features) if adapt_text else text_features
            loss, _ = vlm_loss(f, t, y, tau)
            return loss

        before = eval_vlm(probe)
        for _ in range(probe_steps):
            f = apply_adapter(probe, support_x) if adapt_visual else support_x
            _, df = visual_proto_grads(f, y, tau)
            if not adapt_visual:
                break  # visual learning cannot move a text-only adapter
            grad_down, grad_up = accumulate_param_grads(probe, [(support_x, df)])
            probe = sgd_step(probe, grad_down, grad_up, eta_probe)
        after = eval_vlm(probe)
        records.append(ProbeRecord(epoch=epoch, vlm_before=before, vlm_after=after))
    return ProbeReport(records=records, probe_steps=probe_steps, eta_probe=eta_probe)
