"""Writer for the embedding-dataset directory format.

The format is the external contract shared with the ``xmod-align``
package: a directory holding ``manifest`` (UTF-8 ``key=value`` lines)
plus three little-endian binary payloads (``features.bin``,
``labels.bin``, ``text_features.bin``).  This module implements the
writer independently so the exporter has no code dependency on the
consumer.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def write_dataset(
    out_dir: str | Path,
    features: np.ndarray,
    labels: np.ndarray,
    class_names: list[str],
    text_features: np.ndarray,
    source: str,
    extra_metadata: dict[str, str] | None = None,
) -> None:
    """Write one dataset directory; rows are quantized to float32.

    ``features`` must be (count, dim), ``labels`` (count,) with values in
    ``[0, len(class_names))``, ``text_features`` (classes, dim).  Rows
    are expected to be unit-norm already; the writer does not rescale.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    text_features = np.asarray(text_features, dtype=np.float64)
    count, dim = features.shape
    classes = len(class_names)
    if text_features.shape != (classes, dim):
        raise ValueError(
            f"text_features shape {text_features.shape}, "
            f"expected {(classes, dim)}"
        )
    if labels.shape != (count,):
        raise ValueError(f"labels shape {labels.shape}, expected {(count,)}")
    if count and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"labels must lie in [0, {classes})")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    feat_bytes = np.ascontiguousarray(features, dtype="<f4").tobytes()
    label_bytes = np.ascontiguousarray(labels, dtype="<u4").tobytes()
    text_bytes = np.ascontiguousarray(text_features, dtype="<f4").tobytes()
    (out_dir / "features.bin").write_bytes(feat_bytes)
    (out_dir / "labels.bin").write_bytes(label_bytes)
    (out_dir / "text_features.bin").write_bytes(text_bytes)

    lines = [
        f"format_version={FORMAT_VERSION}",
        f"dim={dim}",
        f"count={count}",
        f"classes={classes}",
        "dtype=f32le",
        f"source={source}",
    ]
    lines += [f"class_name_{i}={name}" for i, name in enumerate(class_names)]
    for key, value in (extra_metadata or {}).items():
        lines.append(f"{key}={value}")
    lines += [
        f"checksum_features={fnv1a64(feat_bytes):016x}",
        f"checksum_labels={fnv1a64(label_bytes):016x}",
        f"checksum_text_features={fnv1a64(text_bytes):016x}",
    ]
    (out_dir / "manifest").write_text("\n".join(lines) + "\n", encoding="utf-8")
