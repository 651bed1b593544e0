"""Two-phase episode fine-tuning of the low-rank adapter.

Training is full-batch gradient descent on the support set.  During the
auxiliary window (by default the first ``init_epochs`` epochs) the loss is
L_vlm + beta * L_ra + lambda * L_ad; afterwards it is L_vlm alone.  The
relationship-alignment target fuses a frozen similarity anchor, computed
from the un-adapted support features, with the class text similarities on
the epoch schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .adapter import LowRankAdapter, apply_adapter, sgd_step
from .gradients import (
    accumulate_param_grads,
    anti_visual_grads,
    ra_grads,
    vlm_grads,
)
from .linalg import normalize_rows
from .losses import (
    LossConfig,
    PhaseState,
    draw_shuffle_indices,
    fuse_matrix,
    total_loss,
)

PHASE_MODES = ("no", "begin", "middle", "last", "all")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one episode fine-tune."""

    eta: float = 5e-2
    epochs: int = 250
    init_epochs: int | None = None  # None -> floor(3E/5)
    loss: LossConfig = field(default_factory=LossConfig)
    rank: int = 4
    alpha_lora: float = 1.0
    branch: str = "visual"
    seed: int = 0
    steps_per_epoch: int = 1
    jitter_sigma: float = 0.0
    record_snapshots: bool = False
    aux_window: tuple[int, int] | None = None  # None -> [0, init_epochs)

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("learning rate must be > 0")
        if self.epochs <= 0:
            raise ValueError("epochs must be > 0")
        if self.init_epochs is not None and not 0 <= self.init_epochs <= self.epochs:
            raise ValueError("init_epochs must lie in [0, epochs]")

    @property
    def resolved_init_epochs(self) -> int:
        if self.init_epochs is None:
            return (3 * self.epochs) // 5
        return self.init_epochs

    @property
    def resolved_window(self) -> tuple[int, int]:
        if self.aux_window is None:
            return (0, self.resolved_init_epochs)
        return self.aux_window


def disturb_phase_variant(config: TrainConfig, phase_mode: str) -> TrainConfig:
    """Rewrite the epoch window in which the auxiliary losses are active."""
    e = config.epochs
    windows = {
        "no": (0, 0),
        "begin": (0, (3 * e) // 5),
        "middle": (e // 5, (4 * e) // 5),
        "last": ((2 * e) // 5, e),
        "all": (0, e),
    }
    if phase_mode not in windows:
        raise ValueError(f"unknown phase mode {phase_mode!r}")
    return replace(config, aux_window=windows[phase_mode])


@dataclass
class TrainTrajectory:
    """Per-epoch loss/accuracy record plus optional adapter snapshots."""

    epochs: list[int] = field(default_factory=list)
    vlm: list[float] = field(default_factory=list)
    ad: list[float] = field(default_factory=list)
    ra: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    support_acc: list[float] = field(default_factory=list)
    dcos_same: list[float | None] = field(default_factory=list)
    dcos_diff: list[float] = field(default_factory=list)
    snapshots: list[LowRankAdapter] = field(default_factory=list)


def _pair_masks(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(len(labels), dtype=bool)
    return same & off_diag, ~same & off_diag


def train_episode(
    support_x: np.ndarray,
    support_y: np.ndarray,
    text_features: np.ndarray,
    config: TrainConfig,
) -> tuple[LowRankAdapter, TrainTrajectory]:
    """Fine-tune an adapter on one support set; deterministic per seed."""
    rng = np.random.default_rng(config.seed)
    x = np.asarray(support_x, dtype=np.float64)
    y = np.asarray(support_y, dtype=np.intp)
    t0 = np.asarray(text_features, dtype=np.float64)
    cfg = config.loss

    if config.jitter_sigma > 0:
        extra = normalize_rows(
            x + rng.normal(0.0, config.jitter_sigma, size=x.shape)
        )
        x = np.vstack([x, extra])
        y = np.concatenate([y, y])

    adapter = LowRankAdapter.init(
        dim=x.shape[1],
        rank=config.rank,
        rng=rng,
        alpha=config.alpha_lora,
        branch=config.branch,
    )

    # Frozen targets for relationship alignment.
    a_v_anchor = x @ x.T
    a_t = t0 @ t0.T

    adapt_visual = config.branch in ("visual", "both")
    adapt_text = config.branch in ("text", "both")
    window = config.resolved_window
    init_epochs = config.resolved_init_epochs
    use_svl = cfg.lam > 0 and cfg.svl_strategy != "off"
    use_ra = cfg.beta > 0 and cfg.ra_strategy != "off"

    same_mask, diff_mask = _pair_masks(y)
    traj = TrainTrajectory()
    prev_gram: np.ndarray | None = None

    for epoch in range(config.epochs):
        phase = PhaseState(epoch, config.epochs, init_epochs)
        aux_active = window[0] <= epoch < window[1]
        for _ in range(config.steps_per_epoch):
            f = apply_adapter(adapter, x) if adapt_visual else x
            t = apply_adapter(adapter, t0) if adapt_text else t0

            l_vlm, probs, df_vlm, dt_vlm = vlm_grads(f, t, y, cfg.tau)
            df = df_vlm
            dt = dt_vlm
            l_ad = 0.0
            l_ra = 0.0
            if aux_active and use_svl:
                indices = noise_w = None
                if cfg.svl_strategy == "class_shuffle":
                    indices = draw_shuffle_indices(y, rng)
                elif cfg.svl_strategy == "noise_proto":
                    noise_w = normalize_rows(
                        rng.standard_normal((int(y.max()) + 1, x.shape[1]))
                    )
                l_ad, df_ad = anti_visual_grads(
                    f, y, cfg.svl_strategy, cfg.tau,
                    indices=indices, noise_weights=noise_w,
                )
                df = df + cfg.lam * df_ad
            if aux_active and use_ra:
                if cfg.ra_strategy == "fused":
                    a_target = fuse_matrix(a_v_anchor, a_t, y, phase)
                elif cfg.ra_strategy == "only_vision":
                    a_target = a_v_anchor
                else:  # only_text
                    a_target = a_t[np.ix_(y, y)]
                l_ra, df_ra = ra_grads(f, a_target, cfg.tau_ra)
                df = df + cfg.beta * df_ra

            contributions = []
            if adapt_visual:
                contributions.append((x, df))
            if adapt_text:
                contributions.append((t0, dt))
            if contributions:
                grad_down, grad_up = accumulate_param_grads(adapter, contributions)
                adapter = sgd_step(adapter, grad_down, grad_up, config.eta)

        loss_total, breakdown = total_loss(
            l_vlm, l_ad, l_ra, cfg, phase, window=window
        )
        gram = f @ f.T
        if prev_gram is None:
            dsame, ddiff = (0.0 if same_mask.any() else None), 0.0
        else:
            delta = gram - prev_gram
            dsame = float(delta[same_mask].mean()) if same_mask.any() else None
            ddiff = float(delta[diff_mask].mean()) if diff_mask.any() else 0.0
        prev_gram = gram

        traj.epochs.append(epoch)
        traj.vlm.append(l_vlm)
        traj.ad.append(breakdown.ad)
        traj.ra.append(breakdown.ra)
        traj.total.append(loss_total)
        traj.support_acc.append(float(np.mean(np.argmax(probs, axis=1) == y)))
        traj.dcos_same.append(dsame)
        traj.dcos_diff.append(ddiff)
        if config.record_snapshots:
            traj.snapshots.append(adapter.copy())

    return adapter, traj
