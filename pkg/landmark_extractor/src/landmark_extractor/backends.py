"""Face-mesh backends: one detection result per image.

``mediapipe`` wraps the face-mesh solution in static-image mode (install
the ``mediapipe`` extra).  ``geometric`` is a dependency-free desk-scale
backend for pre-cropped faces: it finds the dominant bright component and
projects the canonical 468-point layout onto its bounding box.  Both emit
pixel coordinates clamped inside the raster.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STATUS_OK = "ok"
STATUS_NO_FACE = "no-face"
STATUS_MULTI_FACE = "multi-face"

MESH_SIZE = 468


@dataclass(frozen=True)
class Detection:
    status: str  # ok | no-face | multi-face
    points: np.ndarray | None  # (468, 2) pixel coordinates, None when no face


def _clamp(points: np.ndarray, width: int, height: int) -> np.ndarray:
    out = points.copy()
    out[:, 0] = np.clip(out[:, 0], 0.0, width - 0.5)
    out[:, 1] = np.clip(out[:, 1], 0.0, height - 0.5)
    return out


class GeometricBackend:
    """Template projection onto the dominant bright region.

    Detection: threshold at the midpoint of the intensity range, label the
    connected foreground components, and accept components that are large
    enough and plausibly face-shaped.  More than one acceptable component
    means `multi-face` (the largest wins); none means `no-face`.
    """

    backend_id = "geometric"

    def __init__(self, min_area_fraction: float = 0.04, min_contrast: float = 16.0):
        self.min_area_fraction = min_area_fraction
        self.min_contrast = min_contrast

    def detect(self, image: np.ndarray) -> Detection:
        from scipy import ndimage

        from facexplain.builtin_sets import FACE_OVAL_CENTER, FACE_OVAL_RADII, canonical_face_template

        gray = np.asarray(image, dtype=np.float64)
        if gray.ndim == 3:
            gray = gray.mean(axis=2)
        height, width = gray.shape
        if gray.max() - gray.min() < self.min_contrast:
            return Detection(status=STATUS_NO_FACE, points=None)
        threshold = (gray.max() + gray.min()) / 2.0
        labels, count = ndimage.label(gray > threshold)
        if count == 0:
            return Detection(status=STATUS_NO_FACE, points=None)
        areas = ndimage.sum_labels(np.ones_like(gray), labels, index=np.arange(1, count + 1))
        faces = []
        for label, area in enumerate(areas, start=1):
            if area < self.min_area_fraction * gray.size:
                continue
            rows, cols = np.nonzero(labels == label)
            box_h = rows.max() - rows.min() + 1
            box_w = cols.max() - cols.min() + 1
            if not 0.6 <= box_h / box_w <= 2.6:
                continue
            faces.append((area, rows.min(), rows.max(), cols.min(), cols.max()))
        if not faces:
            return Detection(status=STATUS_NO_FACE, points=None)
        faces.sort(reverse=True)
        _, r0, r1, c0, c1 = faces[0]
        template = canonical_face_template(MESH_SIZE)
        # the template's face oval spans a sub-window of its unit square;
        # stretch that window onto the detected bounding box
        (cx, cy), (rx, ry) = FACE_OVAL_CENTER, FACE_OVAL_RADII
        tx = (template[:, 0] - (cx - rx)) / (2 * rx)
        ty = (template[:, 1] - (cy - ry)) / (2 * ry)
        points = np.empty_like(template)
        points[:, 0] = c0 + tx * (c1 - c0)
        points[:, 1] = r0 + ty * (r1 - r0)
        status = STATUS_MULTI_FACE if len(faces) > 1 else STATUS_OK
        return Detection(status=status, points=_clamp(points, width, height))


class MediapipeBackend:
    """Face-mesh detection in static-image mode; normalized outputs are
    scaled to pixels at write time."""

    backend_id = "mediapipe"

    def __init__(self):
        try:
            import mediapipe  # noqa: F401
        except ModuleNotFoundError as exc:  # pragma: no cover - env dependent
            raise ImportError(
                "the mediapipe backend needs the 'mediapipe' package "
                "(pip install landmark-extractor[mediapipe])"
            ) from exc
        import mediapipe as mp

        self._mesh = mp.solutions.face_mesh.FaceMesh(
            static_image_mode=True, max_num_faces=4, refine_landmarks=False
        )

    def detect(self, image: np.ndarray) -> Detection:  # pragma: no cover - needs mediapipe
        arr = np.asarray(image)
        if arr.ndim == 2:
            arr = np.stack([arr] * 3, axis=2)
        arr = arr.astype(np.uint8)
        height, width = arr.shape[:2]
        result = self._mesh.process(arr)
        faces = result.multi_face_landmarks or []
        if not faces:
            return Detection(status=STATUS_NO_FACE, points=None)

        def pixels(face):
            return np.array([[lm.x * width, lm.y * height] for lm in face.landmark[:MESH_SIZE]])

        candidates = [pixels(face) for face in faces]
        largest = max(candidates, key=lambda p: np.ptp(p[:, 0]) * np.ptp(p[:, 1]))
        status = STATUS_MULTI_FACE if len(candidates) > 1 else STATUS_OK
        return Detection(status=status, points=_clamp(largest, width, height))


BACKENDS = {"geometric": GeometricBackend, "mediapipe": MediapipeBackend}


def make_backend(backend_id: str):
    if backend_id not in BACKENDS:
        raise ValueError(f"unknown backend '{backend_id}'; choose from {sorted(BACKENDS)}")
    return BACKENDS[backend_id]()
