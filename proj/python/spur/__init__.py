"""In-memory access to SSCV feature extraction and the encoder forward pass."""

from ._spur import Error, IoError, ValidationError, __version__, encode, extract

__all__ = ["Error", "IoError", "ValidationError", "__version__", "encode", "extract"]
