"""Exporter error taxonomy."""


class ExportError(Exception):
    """Base class for exporter failures."""


class ModelLoadError(ExportError):
    """The requested encoder checkpoint could not be loaded."""


class EmptyClassFolderError(ExportError):
    """A class subfolder contains no readable images."""


class UnreadableImageError(ExportError):
    """An image file could not be decoded.

    During export this is caught per file: the image is skipped with a
    warning and counted in the output manifest metadata.
    """


class TemplateError(ExportError):
    """The prompt template does not contain exactly one ``{}`` placeholder."""
