"""Batch face-mesh landmark extraction for the facexplain pipeline."""

__version__ = "0.1.0"

from .backends import GeometricBackend, MediapipeBackend, make_backend
from .extract import ExtractionManifest, ImageRecord, extract_landmarks

__all__ = [
    "ExtractionManifest",
    "GeometricBackend",
    "ImageRecord",
    "MediapipeBackend",
    "extract_landmarks",
    "make_backend",
]
