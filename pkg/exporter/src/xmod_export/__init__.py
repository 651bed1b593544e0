"""Image-folder to embedding-dataset exporter."""

from .encoders import ClipEncoder, OfflineHashEncoder, build_encoder
from .errors import (
    EmptyClassFolderError,
    ExportError,
    ModelLoadError,
    TemplateError,
    UnreadableImageError,
)
from .export import DEFAULT_TEMPLATE, ExportJob, export
from .writer import fnv1a64, write_dataset

__all__ = [
    "ClipEncoder",
    "OfflineHashEncoder",
    "build_encoder",
    "EmptyClassFolderError",
    "ExportError",
    "ModelLoadError",
    "TemplateError",
    "UnreadableImageError",
    "DEFAULT_TEMPLATE",
    "ExportJob",
    "export",
    "fnv1a64",
    "write_dataset",
]
