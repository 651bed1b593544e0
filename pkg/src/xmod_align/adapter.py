"""Residual low-rank feature adapter and its plain gradient-descent update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    NonFiniteGradientError,
    ZeroVectorError,
)

BRANCHES = ("visual", "text", "both")


@dataclass
class LowRankAdapter:
    """Residual low-rank map: x -> normalize(x + alpha * up @ (down @ x)).

    ``up`` starts at zero so the adapter is exactly the identity (up to
    renormalization) at initialization.
    """

    down: np.ndarray  # (rank, dim)
    up: np.ndarray  # (dim, rank)
    alpha: float = 1.0
    branch: str = "visual"

    def __post_init__(self):
        self.down = np.asarray(self.down, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        if self.down.shape[::-1] != self.up.shape:
            raise DimensionMismatchError(
                f"down {self.down.shape} and up {self.up.shape} are not transposes"
            )
        if self.branch not in BRANCHES:
            raise ValueError(f"unknown branch {self.branch!r}")

    @property
    def rank(self) -> int:
        return self.down.shape[0]

    @property
    def dim(self) -> int:
        return self.down.shape[1]

    @classmethod
    def init(
        cls,
        dim: int,
        rank: int,
        rng: np.random.Generator,
        alpha: float = 1.0,
        branch: str = "visual",
        down_sigma: float = 0.02,
    ) -> "LowRankAdapter":
        down = rng.normal(0.0, down_sigma, size=(rank, dim))
        up = np.zeros((dim, rank))
        return cls(down=down, up=up, alpha=alpha, branch=branch)

    def copy(self) -> "LowRankAdapter":
        return LowRankAdapter(
            down=self.down.copy(), up=self.up.copy(),
            alpha=self.alpha, branch=self.branch,
        )


def adapter_pre_norm(adapter: LowRankAdapter, f: np.ndarray) -> np.ndarray:
    """Residual transform before renormalization: rows x + alpha*up@(down@x)."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape[1] != adapter.dim:
        raise DimensionMismatchError(
            f"feature dim {f.shape[1]} != adapter dim {adapter.dim}"
        )
    return f + adapter.alpha * (f @ adapter.down.T) @ adapter.up.T


def apply_adapter(adapter: LowRankAdapter, f: np.ndarray) -> np.ndarray:
    """Map feature rows through the adapter and re-normalize them."""
    z = adapter_pre_norm(adapter, f)
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms < 1e-30):
        raise ZeroVectorError("adapter output row has near-zero norm")
    return z / norms


def sgd_step(
    adapter: LowRankAdapter,
    grad_down: np.ndarray,
    grad_up: np.ndarray,
    eta: float,
) -> LowRankAdapter:
    """One plain gradient-descent update; returns a new adapter."""
    if not (np.all(np.isfinite(grad_down)) and np.all(np.isfinite(grad_up))):
        raise NonFiniteGradientError("adapter gradient contains NaN/Inf")
    return LowRankAdapter(
        down=adapter.down - eta * grad_down,
        up=adapter.up - eta * grad_up,
        alpha=adapter.alpha,
        branch=adapter.branch,
    )
