"""Persisted embedding-dataset format and the synthetic domain-gap generator.

A dataset is a directory with four files:

* ``manifest`` -- UTF-8 ``key=value`` lines: format_version, dim, count,
  classes, dtype, source, one ``class_name_<i>`` per class, and one FNV-1a
  64-bit checksum per payload.
* ``features.bin`` -- count x dim little-endian float32, row-major.
* ``labels.bin`` -- count little-endian uint32.
* ``text_features.bin`` -- classes x dim little-endian float32.

Features are stored in single precision and widened to float64 (and
re-normalized) on load.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AnchorRejectionExhaustedError,
    ChecksumMismatchError,
    FormatVersionMismatchError,
    LabelOutOfRangeError,
    TruncatedFileError,
)
from .linalg import normalize_rows

FORMAT_VERSION = 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass
class EmbeddingDataset:
    """Labeled visual features plus per-class text features."""

    features: np.ndarray  # (count, dim) float64, unit rows
    labels: np.ndarray  # (count,) int
    class_names: list[str]
    text_features: np.ndarray  # (classes, dim) float64, unit rows
    source: str = "unknown"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.intp)
        self.text_features = np.asarray(self.text_features, dtype=np.float64)
        c = len(self.class_names)
        if self.text_features.shape[0] != c:
            raise ValueError("one text feature row per class required")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= c):
            raise LabelOutOfRangeError(f"labels must lie in [0, {c})")

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def count(self) -> int:
        return self.features.shape[0]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def samples_per_class(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def save_dataset(ds: EmbeddingDataset, path: str | Path) -> None:
    """Write the dataset directory; features are quantized to float32."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    features = np.ascontiguousarray(ds.features, dtype="<f4").tobytes()
    labels = np.ascontiguousarray(ds.labels, dtype="<u4").tobytes()
    text = np.ascontiguousarray(ds.text_features, dtype="<f4").tobytes()
    (path / "features.bin").write_bytes(features)
    (path / "labels.bin").write_bytes(labels)
    (path / "text_features.bin").write_bytes(text)

    lines = [
        f"format_version={FORMAT_VERSION}",
        f"dim={ds.dim}",
        f"count={ds.count}",
        f"classes={ds.num_classes}",
        "dtype=f32le",
        f"source={ds.source}",
    ]
    lines += [f"class_name_{i}={name}" for i, name in enumerate(ds.class_names)]
    lines += [
        f"checksum_features={fnv1a64(features):016x}",
        f"checksum_labels={fnv1a64(labels):016x}",
        f"checksum_text_features={fnv1a64(text):016x}",
    ]
    (path / "manifest").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_manifest(path: Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise TruncatedFileError(f"malformed manifest line: {line!r}")
        entries[key] = value
    return entries


def _read_payload(
    path: Path, expected_bytes: int, checksum_hex: str, name: str
) -> bytes:
    data = path.read_bytes()
    if len(data) != expected_bytes:
        raise TruncatedFileError(
            f"{name}: expected {expected_bytes} bytes, found {len(data)}"
        )
    if f"{fnv1a64(data):016x}" != checksum_hex:
        raise ChecksumMismatchError(f"{name}: checksum mismatch")
    return data


def load_dataset(path: str | Path) -> EmbeddingDataset:
    """Load and validate a dataset directory.

    Rows that are off unit norm by more than 1e-4 trigger a warning; all
    rows are re-normalized to double precision on load.
    """
    path = Path(path)
    manifest = _parse_manifest(path / "manifest")
    version = int(manifest.get("format_version", "-1"))
    if version != FORMAT_VERSION:
        raise FormatVersionMismatchError(
            f"format version {version}, expected {FORMAT_VERSION}"
        )
    if manifest.get("dtype") != "f32le":
        raise FormatVersionMismatchError(
            f"unsupported dtype {manifest.get('dtype')!r}"
        )
    dim = int(manifest["dim"])
    count = int(manifest["count"])
    classes = int(manifest["classes"])

    feat_bytes = _read_payload(
        path / "features.bin", count * dim * 4,
        manifest["checksum_features"], "features.bin",
    )
    label_bytes = _read_payload(
        path / "labels.bin", count * 4,
        manifest["checksum_labels"], "labels.bin",
    )
    text_bytes = _read_payload(
        path / "text_features.bin", classes * dim * 4,
        manifest["checksum_text_features"], "text_features.bin",
    )

    features = np.frombuffer(feat_bytes, dtype="<f4").astype(np.float64)
    features = features.reshape(count, dim)
    labels = np.frombuffer(label_bytes, dtype="<u4").astype(np.intp)
    text = np.frombuffer(text_bytes, dtype="<f4").astype(np.float64)
    text = text.reshape(classes, dim)

    for name, rows in (("features", features), ("text_features", text)):
        norms = np.linalg.norm(rows, axis=1)
        worst = float(np.abs(norms - 1.0).max()) if len(norms) else 0.0
        if worst > 1e-4:
            warnings.warn(
                f"{name}: row norm deviates from 1 by {worst:.2e}; re-normalizing",
                stacklevel=2,
            )

    class_names = [manifest[f"class_name_{i}"] for i in range(classes)]
    return EmbeddingDataset(
        features=normalize_rows(features),
        labels=labels,
        class_names=class_names,
        text_features=normalize_rows(text),
        source=manifest.get("source", "unknown"),
    )


def load_csv_dataset(path: str | Path, text_features: np.ndarray,
                     class_names: list[str]) -> EmbeddingDataset:
    """Tiny hand-written fixtures: header ``label,v0..v{d-1}``."""
    import csv

    rows, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "label":
            raise TruncatedFileError("first CSV column must be 'label'")
        for record in reader:
            labels.append(int(record[0]))
            rows.append([float(v) for v in record[1:]])
    return EmbeddingDataset(
        features=normalize_rows(np.array(rows)),
        labels=np.array(labels),
        class_names=class_names,
        text_features=normalize_rows(np.asarray(text_features)),
        source=f"csv:{Path(path).name}",
    )


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic cross-domain generator."""

    num_classes: int = 20
    per_class: int = 40
    dim: int = 64
    noise_sigma: float = 0.25
    gap_magnitude: float = 0.8
    rotation_angle: float = 1.0
    seed: int = 0
    max_anchor_cos: float = 0.95
    anchor_tries: int = field(default=10_000)

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.noise_sigma < 0 or self.gap_magnitude < 0:
            raise ValueError("sigma and gap magnitude must be >= 0")


def _random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _random_rotation(
    rng: np.random.Generator, dim: int, angle: float
) -> np.ndarray:
    """Rotation by ``angle`` in each of ``dim // 2`` random orthogonal planes.

    Acting on every plane of a random basis makes the angle govern the
    whole space, so cos(x, Rx) is close to cos(angle) for any unit x.
    """
    basis, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    basis *= np.sign(np.diag(r))  # fix QR sign ambiguity
    block = np.eye(dim)
    c, s = np.cos(angle), np.sin(angle)
    for i in range(0, dim - 1, 2):
        block[i : i + 2, i : i + 2] = [[c, -s], [s, c]]
    return basis @ block @ basis.T


def gen_synthetic(cfg: SyntheticConfig) -> EmbeddingDataset:
    """Deterministic synthetic dataset with a controllable modality gap.

    Text anchors are well-separated random unit vectors.  Visual features
    are rotated, noised anchors plus a constant offset of magnitude
    ``gap_magnitude`` along a fixed random direction, then normalized.
    """
    rng = np.random.default_rng(cfg.seed)
    anchors = np.empty((cfg.num_classes, cfg.dim))
    placed = 0
    for _ in range(cfg.anchor_tries):
        if placed == cfg.num_classes:
            break
        candidate = _random_unit(rng, cfg.dim)
        if placed == 0 or np.max(anchors[:placed] @ candidate) < cfg.max_anchor_cos:
            anchors[placed] = candidate
            placed += 1
    if placed < cfg.num_classes:
        raise AnchorRejectionExhaustedError(
            f"placed {placed}/{cfg.num_classes} anchors in {cfg.anchor_tries} tries"
        )

    rotation = (
        _random_rotation(rng, cfg.dim, cfg.rotation_angle)
        if cfg.rotation_angle != 0.0
        else np.eye(cfg.dim)
    )
    gap_dir = _random_unit(rng, cfg.dim)

    labels = np.repeat(np.arange(cfg.num_classes), cfg.per_class)
    base = anchors[labels] @ rotation.T
    noise = rng.normal(0.0, cfg.noise_sigma, size=base.shape) if cfg.noise_sigma else 0.0
    features = normalize_rows(base + noise + cfg.gap_magnitude * gap_dir)

    return EmbeddingDataset(
        features=features,
        labels=labels,
        class_names=[f"class_{i:02d}" for i in range(cfg.num_classes)],
        text_features=anchors,
        source=f"synthetic:seed={cfg.seed}",
    )
