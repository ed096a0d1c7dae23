"""Dataset and pair manifests plus raster IO.

Manifest JSON: ``{"images": [{"image_id", "image_path", "landmark_path"}]}``;
pair manifest JSON: ``{"pairs": [{"pair_id", "a", "b"}]}`` where ``a``/``b``
are image ids from a dataset manifest.  Paths are resolved relative to the
manifest's own directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .errors import ValidationError
from .semantics import LandmarkFile, load_landmarks

__all__ = [
    "ManifestEntry",
    "PairEntry",
    "load_manifest",
    "write_manifest",
    "load_pairs",
    "write_pairs",
    "load_image",
    "write_image_png",
]


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image_path: Path
    landmark_path: Path | None = None

    def load_image(self, mode: str = "L") -> np.ndarray:
        return load_image(self.image_path, mode=mode)

    def load_landmarks(self) -> LandmarkFile:
        if self.landmark_path is None:
            raise ValidationError(f"manifest entry '{self.image_id}' has no landmark file")
        return load_landmarks(self.landmark_path)


@dataclass(frozen=True)
class PairEntry:
    pair_id: str
    a: str
    b: str


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    records = raw["images"] if isinstance(raw, dict) else raw
    base = path.parent
    entries = []
    seen: set[str] = set()
    for rec in records:
        image_id = rec.get("image_id")
        if not image_id:
            raise ValidationError(f"{path}: manifest record without image_id: {rec}")
        if image_id in seen:
            raise ValidationError(f"{path}: duplicate image_id '{image_id}'")
        seen.add(image_id)
        image_path = (base / rec["image_path"]).resolve()
        if not image_path.exists():
            raise ValidationError(f"{path}: image file not found for '{image_id}': {image_path}")
        landmark_path = None
        if rec.get("landmark_path"):
            landmark_path = (base / rec["landmark_path"]).resolve()
            if not landmark_path.exists():
                raise ValidationError(f"{path}: landmark file not found for '{image_id}': {landmark_path}")
        entries.append(ManifestEntry(image_id=image_id, image_path=image_path, landmark_path=landmark_path))
    if not entries:
        raise ValidationError(f"{path}: manifest lists no images")
    return entries


def write_manifest(entries: Sequence[ManifestEntry], path: str | Path) -> None:
    path = Path(path)
    base = path.parent

    def rel(p: Path | None):
        if p is None:
            return None
        try:
            return str(Path(p).relative_to(base))
        except ValueError:
            return str(p)

    payload = {
        "images": [
            {
                "image_id": e.image_id,
                "image_path": rel(e.image_path),
                **({"landmark_path": rel(e.landmark_path)} if e.landmark_path else {}),
            }
            for e in entries
        ]
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_pairs(path: str | Path) -> list[PairEntry]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    records = raw["pairs"] if isinstance(raw, dict) else raw
    pairs = []
    seen: set[str] = set()
    for rec in records:
        pair_id = rec.get("pair_id")
        if not pair_id:
            raise ValidationError(f"{path}: pair record without pair_id: {rec}")
        if pair_id in seen:
            raise ValidationError(f"{path}: duplicate pair_id '{pair_id}'")
        seen.add(pair_id)
        pairs.append(PairEntry(pair_id=pair_id, a=rec["a"], b=rec["b"]))
    if not pairs:
        raise ValidationError(f"{path}: pair manifest lists no pairs")
    return pairs


def write_pairs(pairs: Sequence[PairEntry], path: str | Path) -> None:
    payload = {"pairs": [{"pair_id": p.pair_id, "a": p.a, "b": p.b} for p in pairs]}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_image(path: str | Path, mode: str = "L") -> np.ndarray:
    """Decode an image to float64 in [0, 255]; 'L' gives (h, w), 'RGB' (h, w, 3)."""
    with Image.open(path) as im:
        return np.asarray(im.convert(mode), dtype=np.float64)


def write_image_png(path: str | Path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")
