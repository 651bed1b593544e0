"""Image/text encoders behind a common interface.

Two families are provided:

* ``offline-<dim>`` — a deterministic hash-seeded encoder that needs no
  weights or network.  It maps decoded pixel bytes (or UTF-8 prompt
  bytes) to a reproducible unit vector.  Useful for fixtures, plumbing
  tests, and smoke runs.
* any other tag — treated as a ``transformers`` CLIP checkpoint
  identifier and loaded lazily; failures surface as ``ModelLoadError``.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from .errors import ModelLoadError
from .writer import fnv1a64


class Encoder(Protocol):
    """Minimal contract: encode RGB images and prompt strings to rows."""

    dim: int

    def encode_images(self, images: list) -> np.ndarray: ...

    def encode_texts(self, texts: list[str]) -> np.ndarray: ...


class OfflineHashEncoder:
    """Deterministic weight-free encoder.

    Each input's bytes seed a PRNG that draws one Gaussian vector, which
    is then normalized.  Identical bytes always map to the identical
    row, so exports are reproducible across machines.
    """

    def __init__(self, dim: int):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim

    def _row(self, data: bytes) -> np.ndarray:
        rng = np.random.default_rng(fnv1a64(data))
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def encode_images(self, images: list) -> np.ndarray:
        return np.stack([self._row(img.convert("RGB").tobytes()) for img in images])

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        return np.stack([self._row(text.encode("utf-8")) for text in texts])


class ClipEncoder:
    """Wrapper over a ``transformers`` CLIP checkpoint."""

    def __init__(self, model_tag: str):
        try:
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ModelLoadError(
                f"transformers is required for model {model_tag!r}: {exc}"
            ) from exc
        try:
            self._model = CLIPModel.from_pretrained(model_tag)
            self._processor = CLIPProcessor.from_pretrained(model_tag)
        except Exception as exc:
            raise ModelLoadError(
                f"could not load checkpoint {model_tag!r}: {exc}"
            ) from exc
        self._model.eval()
        self.dim = int(self._model.config.projection_dim)

    def encode_images(self, images: list) -> np.ndarray:
        import torch

        inputs = self._processor(images=images, return_tensors="pt")
        with torch.no_grad():
            out = self._model.get_image_features(**inputs)
        return out.double().cpu().numpy()

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        import torch

        inputs = self._processor(
            text=texts, return_tensors="pt", padding=True
        )
        with torch.no_grad():
            out = self._model.get_text_features(**inputs)
        return out.double().cpu().numpy()


def build_encoder(model_tag: str) -> Encoder:
    """Resolve a model tag to an encoder instance."""
    if model_tag.startswith("offline-"):
        suffix = model_tag.removeprefix("offline-")
        try:
            dim = int(suffix)
        except ValueError:
            raise ModelLoadError(
                f"offline tag must look like 'offline-<dim>', got {model_tag!r}"
            ) from None
        return OfflineHashEncoder(dim)
    return ClipEncoder(model_tag)
