"""Analytic gradients for all losses, a finite-difference oracle, and the
first-order analysis of how one fine-tuning step moves pairwise cosine
similarities.

Feature-space gradients are derived in closed form per loss; the chain rule
through the residual low-rank adapter (including the renormalization
Jacobian (I - f f^T)/||z||) turns them into parameter gradients.  The
cosine-shift machinery deliberately operates on raw, un-renormalized
feature updates: it tracks dot products of explicitly updated features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adapter import LowRankAdapter, adapter_pre_norm
from .errors import (
    DimensionMismatchError,
    NonFiniteGradientError,
    NonFiniteLossError,
)
from .linalg import l2_normalize, log_softmax_rows, softmax_rows
from .losses import _check_labels, class_prototypes, cross_entropy_from_logits


@dataclass(frozen=True)
class GradCheckResult:
    """Agreement record between analytic and finite-difference gradients."""

    analytic: np.ndarray
    numeric: np.ndarray
    max_abs_err: float
    max_rel_err: float


def finite_difference_grad(
    loss_fn, params: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.empty_like(params)
    for j in range(params.size):
        bumped = params.copy()
        bumped[j] += eps
        hi = loss_fn(bumped)
        bumped[j] -= 2 * eps
        lo = loss_fn(bumped)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteLossError(f"loss not finite near coordinate {j}")
        grad[j] = (hi - lo) / (2 * eps)
    return grad


def compare_grads(
    analytic: np.ndarray, numeric: np.ndarray
) -> GradCheckResult:
    analytic = np.ravel(analytic)
    numeric = np.ravel(numeric)
    abs_err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    denom = max(float(scale.max()), 1e-12)
    return GradCheckResult(
        analytic=analytic,
        numeric=numeric,
        max_abs_err=float(abs_err.max()),
        max_rel_err=float(abs_err.max() / denom),
    )


# ---------------------------------------------------------------------------
# Feature-space gradients.


def ce_feature_grads(
    f: np.ndarray, w: np.ndarray, labels: np.ndarray, tau: float
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Cross-entropy over logits F W^T / tau.

    Returns (loss, probs, dL/dF, dL/dW).
    """
    labels = _check_labels(labels, w.shape[0])
    if f.shape[1] != w.shape[1]:
        raise DimensionMismatchError(
            f"feature dims {f.shape[1]} and {w.shape[1]} differ"
        )
    n = f.shape[0]
    loss, probs = cross_entropy_from_logits(f @ w.T, labels, tau)
    d_logits = probs.copy()
    rows = np.arange(n)
    # p_label - 1 = -(sum of the other probabilities); the subtraction form
    # cancels catastrophically when the softmax saturates
    d_logits[rows, labels] = 0.0
    d_logits[rows, labels] = -d_logits.sum(axis=1)
    d_logits /= n * tau
    return loss, probs, d_logits @ w, d_logits.T @ f


def vlm_grads(
    f: np.ndarray, t: np.ndarray, labels: np.ndarray, tau: float
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Loss, probs and gradients of the fine-tuning cross-entropy."""
    loss, probs, df, dt = ce_feature_grads(f, t, labels, tau)
    return loss, probs, df, dt


def _prototype_chain(
    f: np.ndarray, labels: np.ndarray, protos: np.ndarray, d_protos: np.ndarray
) -> np.ndarray:
    """Backpropagate d_protos through normalize(per-class mean of F)."""
    df = np.zeros_like(f)
    for c in range(protos.shape[0]):
        rows = np.flatnonzero(labels == c)
        mean = f[rows].mean(axis=0)
        mean_norm = np.linalg.norm(mean)
        w = protos[c]
        dm = (d_protos[c] - (d_protos[c] @ w) * w) / mean_norm
        df[rows] += dm / len(rows)
    return df


def anti_visual_grads(
    f: np.ndarray,
    labels: np.ndarray,
    strategy: str,
    tau: float,
    indices: np.ndarray | None = None,
    noise_weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Loss and dL/dF for the anti-visual strategies.

    The randomness must be materialized by the caller (``indices`` for
    ``class_shuffle``, ``noise_weights`` for ``noise_proto``) so that the
    gradient matches the exact loss instance.
    """
    labels = np.asarray(labels, dtype=np.intp)
    num_classes = int(labels.max()) + 1
    if strategy == "class_shuffle":
        if indices is None:
            raise ValueError("class_shuffle gradient needs explicit indices")
        w = f[indices]
        loss, _, df, dw = ce_feature_grads(f, w, labels, tau)
        df = df.copy()
        np.add.at(df, indices, dw)
        return loss, df
    if strategy == "neg_lv":
        protos = class_prototypes(f, labels, num_classes)
        loss, _, df, d_protos = ce_feature_grads(f, protos, labels, tau)
        df = df + _prototype_chain(f, labels, protos, d_protos)
        return -loss, -df
    if strategy == "noise_proto":
        if noise_weights is None:
            raise ValueError("noise_proto gradient needs explicit weights")
        loss, _, df, _ = ce_feature_grads(f, noise_weights, labels, tau)
        return loss, df
    raise ValueError(f"unknown strategy {strategy!r}")


def visual_proto_grads(
    f: np.ndarray, labels: np.ndarray, tau: float
) -> tuple[float, np.ndarray]:
    """Visual loss with chained class-prototype weights; returns loss, dL/dF."""
    labels = np.asarray(labels, dtype=np.intp)
    protos = class_prototypes(f, labels, int(labels.max()) + 1)
    loss, _, df, d_protos = ce_feature_grads(f, protos, labels, tau)
    return loss, df + _prototype_chain(f, labels, protos, d_protos)


def ra_grads(
    f: np.ndarray, a_target: np.ndarray, tau_ra: float
) -> tuple[float, np.ndarray]:
    """Relationship-alignment loss and dL/dF.

    The current similarity matrix is F F^T; the target is a constant, so
    gradients flow only through the left side of the KL.
    """
    a_current = f @ f.T
    if a_current.shape != a_target.shape:
        raise DimensionMismatchError(
            f"shapes {a_current.shape} and {a_target.shape} differ"
        )
    n = f.shape[0]
    log_p = log_softmax_rows(a_current, tau_ra)
    log_q = log_softmax_rows(a_target, tau_ra)
    p = np.exp(log_p)
    u = log_p - log_q
    loss = float(np.mean(np.sum(p * u, axis=1)))
    # d(row KL)/d(row of A): p * (u - <p, u>) / tau_ra, averaged over rows.
    da = p * (u - np.sum(p * u, axis=1, keepdims=True)) / (n * tau_ra)
    return loss, (da + da.T) @ f


# ---------------------------------------------------------------------------
# Chain rule through the adapter.


def renorm_chain(g_f: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. normalized rows back through z -> z/||z||."""
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    f = z / norms
    return (g_f - np.sum(g_f * f, axis=1, keepdims=True) * f) / norms


def adapter_param_grads(
    adapter: LowRankAdapter, x: np.ndarray, g_f: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. (down, up) given dL/d(adapted normalized rows)."""
    z = adapter_pre_norm(adapter, x)
    gz = renorm_chain(g_f, z)
    grad_up = adapter.alpha * gz.T @ (x @ adapter.down.T)
    grad_down = adapter.alpha * (gz @ adapter.up).T @ x
    return grad_down, grad_up


def accumulate_param_grads(
    adapter: LowRankAdapter,
    contributions: list[tuple[np.ndarray, np.ndarray]],
) -> tuple[np.ndarray, np.ndarray]:
    """Sum (raw_input, feature_grad) contributions into parameter gradients."""
    grad_down = np.zeros_like(adapter.down)
    grad_up = np.zeros_like(adapter.up)
    for x, g_f in contributions:
        gd, gu = adapter_param_grads(adapter, x, g_f)
        grad_down += gd
        grad_up += gu
    if not (np.all(np.isfinite(grad_down)) and np.all(np.isfinite(grad_up))):
        raise NonFiniteGradientError("adapter gradient contains NaN/Inf")
    return grad_down, grad_up


def analytic_grads(
    kind: str,
    adapter: LowRankAdapter,
    x: np.ndarray,
    *,
    t: np.ndarray | None = None,
    w: np.ndarray | None = None,
    labels: np.ndarray | None = None,
    tau: float = 0.01,
    strategy: str | None = None,
    indices: np.ndarray | None = None,
    noise_weights: np.ndarray | None = None,
    a_target: np.ndarray | None = None,
    tau_ra: float = 1.0,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and adapter-parameter gradients for one loss instance.

    ``kind`` is one of ``vlm`` (needs ``t``), ``visual`` (needs constant
    ``w``), ``visual_proto``, ``ad`` (needs ``strategy`` plus its
    materialized randomness) or ``ra`` (needs ``a_target``).  The adapter's
    ``branch`` decides which of ``x`` / ``t`` pass through it.
    """
    from .adapter import apply_adapter  # local import keeps module load light

    adapt_visual = adapter.branch in ("visual", "both")
    adapt_text = adapter.branch in ("text", "both")
    f = apply_adapter(adapter, x) if adapt_visual else x
    t_eff = apply_adapter(adapter, t) if (adapt_text and t is not None) else t

    contributions: list[tuple[np.ndarray, np.ndarray]] = []
    if kind == "vlm":
        loss, _, df, dt = vlm_grads(f, t_eff, labels, tau)
        if adapt_visual:
            contributions.append((x, df))
        if adapt_text:
            contributions.append((t, dt))
    elif kind == "visual":
        loss, _, df, _ = ce_feature_grads(f, w, labels, tau)
        if adapt_visual:
            contributions.append((x, df))
    elif kind == "visual_proto":
        loss, df = visual_proto_grads(f, labels, tau)
        if adapt_visual:
            contributions.append((x, df))
    elif kind == "ad":
        loss, df = anti_visual_grads(
            f, labels, strategy, tau,
            indices=indices, noise_weights=noise_weights,
        )
        if adapt_visual:
            contributions.append((x, df))
    elif kind == "ra":
        loss, df = ra_grads(f, a_target, tau_ra)
        if adapt_visual:
            contributions.append((x, df))
    else:
        raise ValueError(f"unknown loss kind {kind!r}")

    if not contributions:
        return loss, np.zeros_like(adapter.down), np.zeros_like(adapter.up)
    grad_down, grad_up = accumulate_param_grads(adapter, contributions)
    return loss, grad_down, grad_up


# ---------------------------------------------------------------------------
# First-order cosine-shift analysis (raw-feature update, no renormalization).


def grad_vlm_wrt_feature(
    f_i: np.ndarray, t: np.ndarray, label: int, tau: float
) -> np.ndarray:
    """Closed-form gradient of the per-sample loss w.r.t. the raw feature:
    -t_label/tau + (1/tau) * sum_k p_k t_k."""
    f_i = np.asarray(f_i, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if f_i.shape[0] != t.shape[1]:
        raise DimensionMismatchError(
            f"feature dim {f_i.shape[0]} != text dim {t.shape[1]}"
        )
    p = softmax_rows((f_i @ t.T)[None, :], tau)[0]
    return (-t[label] + p @ t) / tau


def explicit_update(
    f: np.ndarray, t: np.ndarray, eta: float, tau: float
) -> np.ndarray:
    """One raw-feature gradient step per sample: f_i + (eta/tau)(t_i - sum_j p_ij t_j).

    ``t`` holds one text row per sample (row i is sample i's text feature).
    """
    p = softmax_rows(f @ t.T, tau)
    return f + (eta / tau) * (t - p @ t)


def delta_cos_actual(
    f: np.ndarray, t: np.ndarray, i: int, k: int, eta: float, tau: float
) -> float:
    """Change in f_i . f_k under the explicit raw-feature update."""
    f_new = explicit_update(f, t, eta, tau)
    return float(f_new[i] @ f_new[k] - f[i] @ f[k])


def predicted_delta_cos(
    f: np.ndarray,
    t: np.ndarray,
    p: np.ndarray,
    i: int,
    k: int,
    eta: float,
    tau: float,
) -> float:
    """First-order prediction of the change in f_i . f_k after one step."""
    term_ik = f[i] @ t[k] - p[k] @ (t @ f[i])
    term_ki = f[k] @ t[i] - p[i] @ (t @ f[k])
    return float((eta / tau) * (term_ik + term_ki))


@dataclass(frozen=True)
class TheoremPair:
    i: int
    k: int
    same_class: bool
    delta_cos_actual: float
    delta_cos_predicted: float
    residual: float


@dataclass(frozen=True)
class TheoremReport:
    pairs: list[TheoremPair]
    eta: float
    tau: float


def build_theorem_report(
    f: np.ndarray,
    t: np.ndarray,
    labels: np.ndarray,
    eta: float,
    tau: float,
) -> TheoremReport:
    """Actual vs predicted cosine shift for every sample pair."""
    labels = np.asarray(labels)
    p = softmax_rows(f @ t.T, tau)
    pairs = []
    n = f.shape[0]
    for i in range(n):
        for k in range(i + 1, n):
            actual = delta_cos_actual(f, t, i, k, eta, tau)
            predicted = predicted_delta_cos(f, t, p, i, k, eta, tau)
            pairs.append(
                TheoremPair(
                    i=i,
                    k=k,
                    same_class=bool(labels[i] == labels[k]),
                    delta_cos_actual=actual,
                    delta_cos_predicted=predicted,
                    residual=abs(actual - predicted),
                )
            )
    return TheoremReport(pairs=pairs, eta=eta, tau=tau)


def _random_instance(
    rng: np.random.Generator, n: int, d: int
) -> tuple[np.ndarray, np.ndarray]:
    f = rng.standard_normal((n, d))
    t = rng.standard_normal((n, d))
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    return f, t


def residual_ratio_suite(
    rng: np.random.Generator,
    instances: int = 50,
    n: int = 5,
    d: int = 16,
    eta: float = 1e-3,
    tau: float = 1.0,
) -> list[float]:
    """r(eta/2)/r(eta) for random instances, skipping pairs where the
    residual is below 1e3 * machine epsilon."""
    floor = 1e3 * np.finfo(np.float64).eps
    ratios = []
    tries = 0
    while len(ratios) < instances:
        tries += 1
        if tries > 100 * instances:
            raise ValueError(
                "could not find enough instances with measurable residuals; "
                "is eta too small?"
            )
        f, t = _random_instance(rng, n, d)
        p = softmax_rows(f @ t.T, tau)
        i, k = rng.choice(n, size=2, replace=False)
        r_full = abs(
            delta_cos_actual(f, t, i, k, eta, tau)
            - predicted_delta_cos(f, t, p, i, k, eta, tau)
        )
        if r_full <= floor:
            continue
        r_half = abs(
            delta_cos_actual(f, t, i, k, eta / 2, tau)
            - predicted_delta_cos(f, t, p, i, k, eta / 2, tau)
        )
        ratios.append(r_half / r_full)
    return ratios


def same_class_positivity_suite(
    rng: np.random.Generator,
    instances: int = 50,
    n: int = 5,
    d: int = 16,
    eta: float = 1e-3,
    tau: float = 1.0,
) -> list[float]:
    """Predicted cosine shifts for constructed same-class pairs whose
    correct logits are strictly maximal; each value should be positive."""
    values = []
    while len(values) < instances:
        f, t = _random_instance(rng, n, d)
        # Samples 0 and 1 share a class: same text row, features near it.
        t[1] = t[0]
        f[0] = l2_normalize(t[0] + 0.2 * rng.standard_normal(d))
        f[1] = l2_normalize(t[0] + 0.2 * rng.standard_normal(d))
        s = f @ t.T
        # Require the correct logit to be strictly maximal for both rows.
        if not all(
            s[i, i] > max(s[i, j] for j in range(n) if j != i and not
                          (i in (0, 1) and j in (0, 1)))
            for i in (0, 1)
        ):
            continue
        p = softmax_rows(s, tau)
        values.append(predicted_delta_cos(f, t, p, 0, 1, eta, tau))
    return values
