"""
Exception hierarchy for the flow composition toolkit.
Every error raised on purpose derives from FlowCompError so the CLI can report
per-item failures without swallowing programming errors.
"""

from pathlib import Path
from typing import Optional, Union


class FlowCompError(Exception):
    """Base class for all expected failures."""


class ImageLoadError(FlowCompError):
    """An image file could not be turned into pixels."""

    def __init__(self, path: Union[str, Path], reason: str):
        self.path = Path(path)
        super().__init__(f"{self.path}: {reason}")


class ImageNotFoundError(ImageLoadError, FileNotFoundError):
    """The image path does not exist."""


class UnsupportedFormatError(ImageLoadError):
    """The file exists but is neither PNG nor JPEG."""


class CorruptImageError(ImageLoadError):
    """The file claims a supported format but cannot be decoded."""


class FieldError(FlowCompError, ValueError):
    """A field is too small, degenerate or carries non-finite values."""


class ShapeMismatchError(FieldError):
    """Two fields that must share a shape do not."""


class FieldFormatError(FlowCompError):
    """A raw float (FCF) file has a malformed header or payload."""


class _LineError(FlowCompError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmbeddingFormatError(_LineError):
    """Embedding CSV could not be parsed."""


class LabelFormatError(_LineError):
    """Label TSV could not be parsed."""


class TripletError(FlowCompError):
    """A triplet references an id that is not in the embedding set."""


class NoValidTripletsError(FlowCompError):
    """Sampling produced no triplet at all."""


class ClusteringError(FlowCompError):
    """Clustering metrics are undefined for the given partition."""


class ConfigError(FlowCompError):
    """Configuration values are invalid or unknown."""
