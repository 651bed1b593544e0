"""Dense vector/matrix primitives: normalization, similarity, softmax.

Everything here operates on plain float64 numpy arrays and is pure, so the
functions are safe to call concurrently.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DimensionMismatchError,
    NonPositiveTemperatureError,
    ZeroVectorError,
)

ZERO_NORM_THRESHOLD = 1e-30


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Return ``v`` scaled to unit Euclidean norm."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm < ZERO_NORM_THRESHOLD:
        raise ZeroVectorError(f"cannot normalize vector with norm {norm!r}")
    return v / norm


def normalize_rows(m: np.ndarray) -> np.ndarray:
    """Normalize every row of ``m`` to unit norm."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms < ZERO_NORM_THRESHOLD):
        bad = int(np.argmin(norms))
        raise ZeroVectorError(f"row {bad} has near-zero norm")
    return m / norms


def cosine_similarity(f: np.ndarray, t: np.ndarray) -> float:
    """Dot product of two unit-norm vectors."""
    f = np.asarray(f, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if f.shape != t.shape:
        raise DimensionMismatchError(f"shapes {f.shape} and {t.shape} differ")
    return float(f @ t)


def gram_matrix(f: np.ndarray) -> np.ndarray:
    """Pairwise similarity matrix F F^T of row-normalized features."""
    f = np.asarray(f, dtype=np.float64)
    return f @ f.T


def cross_gram(f: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Cross-modal similarity matrix F T^T."""
    f = np.asarray(f, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if f.shape[1] != t.shape[1]:
        raise DimensionMismatchError(
            f"feature dims {f.shape[1]} and {t.shape[1]} differ"
        )
    return f @ t.T


def softmax_rows(m: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise softmax of ``m / tau`` with max-subtraction for stability."""
    if tau <= 0:
        raise NonPositiveTemperatureError(f"temperature must be > 0, got {tau}")
    m = np.asarray(m, dtype=np.float64) / tau
    m = m - m.max(axis=-1, keepdims=True)
    e = np.exp(m)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_rows(m: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise log-softmax of ``m / tau``, computed stably."""
    if tau <= 0:
        raise NonPositiveTemperatureError(f"temperature must be > 0, got {tau}")
    m = np.asarray(m, dtype=np.float64) / tau
    m = m - m.max(axis=-1, keepdims=True)
    # log1p over the non-maximal terms keeps full precision when the softmax
    # saturates (the plain log(sum(exp)) loses ~8 digits near saturation)
    e = np.exp(m)
    top = np.argmax(m, axis=-1)
    rows = np.arange(m.shape[0])
    e[rows, top] = 0.0
    lse = np.log1p(e.sum(axis=-1, keepdims=True))
    return m - lse
