"""Desk-scale laboratory for studying the visual-learning shortcut in
cross-modal fine-tuning: losses, low-rank adapter training, and alignment
diagnostics on precomputed or synthetic embedding features."""

from .adapter import LowRankAdapter, apply_adapter, sgd_step
from .data_io import (
    EmbeddingDataset,
    SyntheticConfig,
    gen_synthetic,
    load_dataset,
    save_dataset,
)
from .diagnostics import (
    GapReport,
    ProbeReport,
    delta_cos_trace,
    gap_shift,
    gap_sweep,
    gap_vector,
    visual_probe,
)
from .episodes import (
    BenchmarkConfig,
    BenchmarkResult,
    Episode,
    classify,
    run_benchmark,
    sample_episode,
)
from .gradients import (
    analytic_grads,
    delta_cos_actual,
    finite_difference_grad,
    grad_vlm_wrt_feature,
    predicted_delta_cos,
)
from .linalg import (
    cosine_similarity,
    cross_gram,
    gram_matrix,
    l2_normalize,
    normalize_rows,
    softmax_rows,
)
from .losses import (
    LossConfig,
    PhaseState,
    anti_visual_loss,
    fuse_matrix,
    ra_loss,
    total_loss,
    visual_loss,
    vlm_loss,
)
from .trainer import TrainConfig, TrainTrajectory, disturb_phase_variant, train_episode

__version__ = "0.1.0"

__all__ = [
    "BenchmarkConfig",
    "BenchmarkResult",
    "EmbeddingDataset",
    "Episode",
    "GapReport",
    "LossConfig",
    "LowRankAdapter",
    "PhaseState",
    "ProbeReport",
    "SyntheticConfig",
    "TrainConfig",
    "TrainTrajectory",
    "analytic_grads",
    "anti_visual_loss",
    "apply_adapter",
    "classify",
    "cosine_similarity",
    "cross_gram",
    "delta_cos_actual",
    "delta_cos_trace",
    "disturb_phase_variant",
    "finite_difference_grad",
    "fuse_matrix",
    "gap_shift",
    "gap_sweep",
    "gap_vector",
    "gen_synthetic",
    "grad_vlm_wrt_feature",
    "gram_matrix",
    "l2_normalize",
    "load_dataset",
    "normalize_rows",
    "predicted_delta_cos",
    "ra_loss",
    "run_benchmark",
    "sample_episode",
    "save_dataset",
    "sgd_step",
    "softmax_rows",
    "total_loss",
    "train_episode",
    "visual_loss",
    "visual_probe",
    "vlm_loss",
]
