"""Folder-of-images to embedding-dataset export."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .encoders import Encoder, build_encoder
from .errors import EmptyClassFolderError, TemplateError
from .writer import write_dataset

DEFAULT_TEMPLATE = "a photo of a {}."

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tiff", ".webp"}


@dataclass(frozen=True)
class ExportJob:
    """One export request."""

    model_tag: str
    image_root: Path
    out_dir: Path
    template: str = DEFAULT_TEMPLATE
    batch_size: int = 32

    def __post_init__(self):
        if self.template.count("{}") != 1:
            raise TemplateError(
                f"template must contain exactly one '{{}}' placeholder, "
                f"got {self.template!r}"
            )
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _list_class_folders(root: Path) -> list[Path]:
    folders = sorted(
        (p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name
    )
    if not folders:
        raise EmptyClassFolderError(f"no class subfolders under {root}")
    return folders


def _normalize(rows: np.ndarray) -> np.ndarray:
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def export(job: ExportJob, encoder: Encoder | None = None) -> Path:
    """Encode ``job.image_root`` and write the dataset directory.

    Class names are the subfolder names in lexicographic order.  Images
    that fail to decode are skipped with a warning and counted in the
    manifest's ``skipped_unreadable`` entry; a class whose every image is
    unreadable (or that has none) raises ``EmptyClassFolderError``.
    Returns the output directory path.
    """
    if encoder is None:
        encoder = build_encoder(job.model_tag)
    root = Path(job.image_root)
    class_folders = _list_class_folders(root)
    class_names = [p.name for p in class_folders]

    feature_rows: list[np.ndarray] = []
    labels: list[int] = []
    skipped = 0
    for label, folder in enumerate(class_folders):
        files = sorted(
            p for p in folder.iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        )
        images, batch_rows = [], []

        def flush():
            if images:
                batch_rows.append(encoder.encode_images(images))
                images.clear()

        for path in files:
            try:
                with Image.open(path) as img:
                    images.append(img.convert("RGB"))
            except (OSError, UnidentifiedImageError) as exc:
                warnings.warn(f"skipping unreadable image {path}: {exc}",
                              stacklevel=2)
                skipped += 1
                continue
            if len(images) == job.batch_size:
                flush()
        flush()
        if not batch_rows:
            raise EmptyClassFolderError(
                f"class folder {folder} has no readable images"
            )
        rows = np.concatenate(batch_rows)
        feature_rows.append(rows)
        labels.extend([label] * len(rows))

    prompts = [job.template.format(name) for name in class_names]
    text = encoder.encode_texts(prompts)

    write_dataset(
        job.out_dir,
        features=_normalize(np.concatenate(feature_rows)),
        labels=np.asarray(labels),
        class_names=class_names,
        text_features=_normalize(text),
        source=f"export:{job.model_tag}",
        extra_metadata={
            "prompt_template": job.template,
            "skipped_unreadable": str(skipped),
        },
    )
    return Path(job.out_dir)
