"""Batch extraction: image directory in, landmark JSON files out.

Every decodable image gets exactly one status (`ok`, `no-face`,
`multi-face`); successful detections write one schema-valid landmark JSON
per image.  Nothing is silently skipped: undecodable files are recorded as
errors in the manifest.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .backends import MESH_SIZE, STATUS_NO_FACE, STATUS_OK, Detection, make_backend

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    source: str
    status: str
    landmark_path: str | None = None
    error: str | None = None


@dataclass(frozen=True)
class ExtractionManifest:
    input_dir: str
    output_dir: str
    backend_id: str
    records: tuple[ImageRecord, ...] = field(default_factory=tuple)

    @property
    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for record in self.records:
            out[record.status] = out.get(record.status, 0) + 1
        return out

    @property
    def failures(self) -> tuple[ImageRecord, ...]:
        return tuple(r for r in self.records if r.status not in (STATUS_OK, "multi-face"))

    def to_dict(self) -> dict:
        return {
            "input_dir": self.input_dir,
            "output_dir": self.output_dir,
            "backend": self.backend_id,
            "counts": self.counts,
            "images": [
                {
                    "image_id": r.image_id,
                    "source": r.source,
                    "status": r.status,
                    **({"landmark_path": r.landmark_path} if r.landmark_path else {}),
                    **({"error": r.error} if r.error else {}),
                }
                for r in self.records
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _validate_and_payload(image_id: str, width: int, height: int, points: np.ndarray) -> dict:
    import jsonschema

    from facexplain import landmark_schema

    payload = {
        "image_id": image_id,
        "width": width,
        "height": height,
        "mesh_size": MESH_SIZE,
        "points": [[float(x), float(y)] for x, y in points],
    }
    jsonschema.validate(payload, landmark_schema())
    return payload


def extract_landmarks(
    input_dir: str | Path,
    output_dir: str | Path,
    *,
    backend: str = "geometric",
    jobs: int = 1,
) -> ExtractionManifest:
    """Run the face-mesh backend over every image in ``input_dir``.

    Emits ``<stem>.landmarks.json`` per detected face into ``output_dir``
    plus an ``extraction_manifest.json`` describing every input.
    """
    input_dir = Path(input_dir)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    detector = make_backend(backend)
    sources = sorted(p for p in input_dir.iterdir()
                     if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())

    def process(path: Path) -> ImageRecord:
        image_id = path.stem
        try:
            with Image.open(path) as im:
                arr = np.asarray(im.convert("L"), dtype=np.float64)
        except Exception as exc:
            return ImageRecord(image_id=image_id, source=path.name, status="error", error=str(exc))
        detection: Detection = detector.detect(arr)
        if detection.status == STATUS_NO_FACE:
            return ImageRecord(image_id=image_id, source=path.name, status=STATUS_NO_FACE)
        height, width = arr.shape
        payload = _validate_and_payload(image_id, width, height, detection.points)
        out_path = output_dir / f"{image_id}.landmarks.json"
        out_path.write_text(json.dumps(payload, sort_keys=True) + "\n")
        return ImageRecord(
            image_id=image_id, source=path.name, status=detection.status,
            landmark_path=out_path.name,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(process, sources))
    else:
        records = [process(p) for p in sources]
    manifest = ExtractionManifest(
        input_dir=str(input_dir), output_dir=str(output_dir),
        backend_id=detector.backend_id, records=tuple(records),
    )
    manifest.save(output_dir / "extraction_manifest.json")
    return manifest
