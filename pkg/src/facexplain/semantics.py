"""Semantic face regions: landmark files, region sets, mask rasterization, occlusion.

A semantic set names face regions and defines each one by polygons over
landmark indices.  Masks are rasterized per region with an even-odd scan
fill; an optional background region is the complement of the union of all
facial polygons.  Occlusion replaces masked pixels according to a fill
strategy and leaves every other pixel bit-identical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, ValidationError

__all__ = [
    "LandmarkFile",
    "SemanticRegion",
    "SemanticSet",
    "RegionMaskStack",
    "FillStrategy",
    "load_landmarks",
    "write_landmarks",
    "landmark_schema",
    "load_semantic_set",
    "builtin_set_ids",
    "fill_polygon",
    "build_masks",
    "occlude",
    "masks_to_png",
]

DEFAULT_MESH_SIZE = 468


# ---------------------------------------------------------------------------
# Landmark files


@dataclass(frozen=True)
class LandmarkFile:
    """Per-image face-mesh landmarks in pixel coordinates."""

    image_id: str
    width: int
    height: int
    mesh_size: int
    points: np.ndarray  # (mesh_size, 2) float64, columns (x, y)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        if not self.image_id:
            raise ValidationError("landmark file has an empty image_id")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(
                f"{self.image_id}: image dimensions must be positive, got {self.width}x{self.height}"
            )
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValidationError(f"{self.image_id}: points must be an (n, 2) array, got {pts.shape}")
        if pts.shape[0] != self.mesh_size:
            raise ValidationError(
                f"{self.image_id}: expected {self.mesh_size} landmarks per header, file has {pts.shape[0]}"
            )
        if not np.all(np.isfinite(pts)):
            raise ValidationError(f"{self.image_id}: landmark coordinates must be finite")
        bad = np.nonzero(
            (pts[:, 0] < 0) | (pts[:, 0] >= self.width) | (pts[:, 1] < 0) | (pts[:, 1] >= self.height)
        )[0]
        if bad.size:
            i = int(bad[0])
            raise ValidationError(
                f"{self.image_id}: landmark {i} at ({pts[i, 0]:g}, {pts[i, 1]:g}) lies outside "
                f"[0, {self.width}) x [0, {self.height})"
            )
        pts.setflags(write=False)


def landmark_schema() -> dict:
    """The JSON schema for landmark files (shared with the extractor tool)."""
    with resources.files("facexplain").joinpath("schemas/landmark.schema.json").open("rb") as fh:
        return json.load(fh)


def load_landmarks(path: str | Path) -> LandmarkFile:
    """Load and validate a landmark JSON file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    try:
        import jsonschema

        jsonschema.validate(raw, landmark_schema())
    except jsonschema.ValidationError as exc:  # pragma: no cover - message passthrough
        raise ValidationError(f"{path}: {exc.message}") from exc
    return LandmarkFile(
        image_id=raw["image_id"],
        width=int(raw["width"]),
        height=int(raw["height"]),
        mesh_size=int(raw["mesh_size"]),
        points=np.asarray(raw["points"], dtype=np.float64),
    )


def write_landmarks(lm: LandmarkFile, path: str | Path) -> None:
    """Serialize a LandmarkFile to the documented JSON schema."""
    payload = {
        "image_id": lm.image_id,
        "width": lm.width,
        "height": lm.height,
        "mesh_size": lm.mesh_size,
        "points": [[float(x), float(y)] for x, y in lm.points],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Semantic sets


@dataclass(frozen=True)
class SemanticRegion:
    """One named region: a list of landmark-index polygons, or the background."""

    name: str
    polygons: tuple[tuple[int, ...], ...] = ()
    is_background: bool = False


@dataclass(frozen=True)
class SemanticSet:
    """Ordered collection of face regions defined over a landmark mesh."""

    set_id: str
    mesh_size: int
    regions: tuple[SemanticRegion, ...]

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if len(self.regions) < 2:
            raise ValidationError(f"set '{self.set_id}': needs at least 2 regions, got {len(self.regions)}")
        seen: set[str] = set()
        n_background = 0
        for region in self.regions:
            if not region.name:
                raise ValidationError(f"set '{self.set_id}': region with empty name")
            if region.name in seen:
                raise ValidationError(f"set '{self.set_id}': duplicate region name '{region.name}'")
            seen.add(region.name)
            if region.is_background:
                n_background += 1
                continue
            if not region.polygons:
                raise ValidationError(f"set '{self.set_id}': region '{region.name}' has no polygons")
            for poly in region.polygons:
                for idx in poly:
                    if not 0 <= idx < self.mesh_size:
                        raise ValidationError(
                            f"set '{self.set_id}': region '{region.name}' references landmark "
                            f"{idx}, outside mesh of size {self.mesh_size}"
                        )
        if n_background > 1:
            raise ValidationError(f"set '{self.set_id}': more than one background region")

    @property
    def size(self) -> int:
        return len(self.regions)

    @property
    def region_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.regions)

    @property
    def background_index(self) -> int | None:
        for i, r in enumerate(self.regions):
            if r.is_background:
                return i
        return None


def builtin_set_ids() -> tuple[str, ...]:
    from . import builtin_sets

    return builtin_sets.BUILTIN_SET_IDS


def load_semantic_set(source: str | Path) -> SemanticSet:
    """Load a semantic set from a built-in id ('set0'/'set1'/'set2') or a JSON/TOML file."""
    from . import builtin_sets

    if isinstance(source, str) and source in builtin_sets.BUILTIN_SET_IDS:
        return builtin_sets.builtin_set(source)
    path = Path(source)
    if not path.exists():
        raise ValidationError(
            f"semantic set '{source}' is neither a built-in id {builtin_sets.BUILTIN_SET_IDS} nor an existing file"
        )
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:  # pragma: no cover - version dependent
            import tomli as tomllib
        try:
            raw = tomllib.loads(path.read_text())
        except Exception as exc:
            raise ValidationError(f"{path}: not valid TOML ({exc})") from exc
    else:
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return semantic_set_from_dict(raw, origin=str(path))


def semantic_set_from_dict(raw: dict, origin: str = "<dict>") -> SemanticSet:
    for key in ("set_id", "mesh_size", "regions"):
        if key not in raw:
            raise ValidationError(f"{origin}: missing required key '{key}'")
    regions = []
    for entry in raw["regions"]:
        if "name" not in entry:
            raise ValidationError(f"{origin}: region without a 'name'")
        regions.append(
            SemanticRegion(
                name=entry["name"],
                polygons=tuple(tuple(int(i) for i in poly) for poly in entry.get("polygons", [])),
                is_background=bool(entry.get("background", False)),
            )
        )
    return SemanticSet(set_id=raw["set_id"], mesh_size=int(raw["mesh_size"]), regions=tuple(regions))


def semantic_set_to_dict(sset: SemanticSet) -> dict:
    return {
        "set_id": sset.set_id,
        "mesh_size": sset.mesh_size,
        "regions": [
            {
                "name": r.name,
                "polygons": [list(p) for p in r.polygons],
                **({"background": True} if r.is_background else {}),
            }
            for r in sset.regions
        ],
    }


# ---------------------------------------------------------------------------
# Rasterization

# Convention: pixel (row r, col c) belongs to a polygon iff its center
# (c + 0.5, r + 0.5) is inside under the even-odd rule, counting edge
# crossings strictly to the right of the center.  The test suite checks the
# scanline fill against an independent per-pixel ray-casting oracle using the
# same convention.


def fill_polygon(vertices: np.ndarray, width: int, height: int) -> np.ndarray:
    """Rasterize one polygon to a boolean (height, width) mask, even-odd rule."""
    verts = np.asarray(vertices, dtype=np.float64)
    if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
        raise ValidationError(f"polygon needs at least 3 (x, y) vertices, got shape {verts.shape}")
    mask = np.zeros((height, width), dtype=bool)
    x0, y0 = verts[:, 0], verts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    r_lo = max(0, int(np.floor(verts[:, 1].min() - 0.5)))
    r_hi = min(height - 1, int(np.ceil(verts[:, 1].max())))
    for r in range(r_lo, r_hi + 1):
        y = r + 0.5
        crossing = (y0 > y) != (y1 > y)
        if not crossing.any():
            continue
        xs = x0[crossing] + (y - y0[crossing]) * (x1[crossing] - x0[crossing]) / (y1[crossing] - y0[crossing])
        xs.sort()
        for left, right in zip(xs[0::2], xs[1::2]):
            # pixel center in [left, right): crossings strictly right of center are odd
            c_start = max(0, int(np.ceil(left - 0.5)))
            c_stop = min(width, int(np.ceil(right - 0.5)))
            if c_stop > c_start:
                mask[r, c_start:c_stop] = True
    return mask


@dataclass(frozen=True)
class RegionMaskStack:
    """Binary masks, one per region, in the region order of the source set."""

    image_id: str
    set_id: str
    masks: np.ndarray  # (s, height, width) bool
    overlaps: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        masks = np.asarray(self.masks)
        if masks.dtype != bool:
            if not np.isin(masks, (0, 1)).all():
                raise ValidationError("masks must be strictly binary")
            masks = masks.astype(bool)
        if masks.ndim != 3:
            raise ValidationError(f"masks must be (regions, height, width), got shape {masks.shape}")
        masks.setflags(write=False)
        object.__setattr__(self, "masks", masks)

    @property
    def size(self) -> int:
        return self.masks.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.masks.shape[1:]

    @property
    def areas(self) -> np.ndarray:
        return self.masks.sum(axis=(1, 2))


def build_masks(landmarks: LandmarkFile, sset: SemanticSet) -> RegionMaskStack:
    """Rasterize every region of `sset` against one landmark file.

    The background region (if any) is the complement of the union of all
    facial polygons.  Overlapping facial regions are allowed and recorded in
    the result's `overlaps` field.
    """
    if landmarks.mesh_size != sset.mesh_size:
        raise ValidationError(
            f"{landmarks.image_id}: landmark mesh size {landmarks.mesh_size} does not match "
            f"set '{sset.set_id}' mesh size {sset.mesh_size}"
        )
    h, w = landmarks.height, landmarks.width
    masks = np.zeros((sset.size, h, w), dtype=bool)
    facial_union = np.zeros((h, w), dtype=bool)
    background_at = sset.background_index
    for n, region in enumerate(sset.regions):
        if region.is_background:
            continue
        acc = np.zeros((h, w), dtype=bool)
        for poly in region.polygons:
            pts = landmarks.points[list(poly)]
            if np.unique(pts, axis=0).shape[0] < 3:
                raise ValidationError(
                    f"{landmarks.image_id}: region '{region.name}' has a degenerate polygon "
                    f"(< 3 distinct points)"
                )
            acc |= fill_polygon(pts, w, h)
        masks[n] = acc
        facial_union |= acc
    if background_at is not None:
        masks[background_at] = ~facial_union
    overlaps = []
    facial_idx = [n for n in range(sset.size) if n != background_at]
    for i_pos, i in enumerate(facial_idx):
        for j in facial_idx[i_pos + 1 :]:
            if np.any(masks[i] & masks[j]):
                overlaps.append((i, j))
    return RegionMaskStack(
        image_id=landmarks.image_id, set_id=sset.set_id, masks=masks, overlaps=tuple(overlaps)
    )


# ---------------------------------------------------------------------------
# Occlusion


@dataclass(frozen=True)
class FillStrategy:
    """How removed pixels are repainted: constant value, per-image mean, or black."""

    kind: str  # "constant" | "mean"
    value: float = 127.5

    _KINDS = ("constant", "mean")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValidationError(f"unknown fill strategy '{self.kind}'; choose from {self._KINDS}")

    @classmethod
    def gray(cls) -> "FillStrategy":
        """Mid-gray constant fill, the default throughout the package."""
        return cls("constant", 127.5)

    @classmethod
    def black(cls) -> "FillStrategy":
        return cls("constant", 0.0)

    @classmethod
    def mean(cls) -> "FillStrategy":
        """Per-image channel mean, computed over the whole image."""
        return cls("mean", float("nan"))

    @classmethod
    def constant(cls, value: float) -> "FillStrategy":
        return cls("constant", float(value))

    @classmethod
    def parse(cls, label: str) -> "FillStrategy":
        label = label.strip().lower()
        if label in ("gray", "grey", "mid-gray"):
            return cls.gray()
        if label == "black":
            return cls.black()
        if label == "mean":
            return cls.mean()
        try:
            return cls.constant(float(label))
        except ValueError:
            raise ValidationError(f"unknown fill strategy '{label}'") from None

    @property
    def label(self) -> str:
        """Stable string recorded in result metadata."""
        if self.kind == "mean":
            return "mean"
        if self.value == 0.0:
            return "black"
        if self.value == 127.5:
            return "gray"
        return f"constant:{self.value:g}"

    def resolve(self, image: np.ndarray) -> np.ndarray:
        """Fill value(s) for `image`: scalar for 2-D, per-channel vector for 3-D."""
        if self.kind == "mean":
            fill = image.mean(axis=(0, 1), dtype=np.float64)
        else:
            fill = self.value if image.ndim == 2 else np.full(image.shape[2], self.value)
        fill = np.asarray(fill, dtype=np.float64)
        if np.issubdtype(image.dtype, np.integer):
            info = np.iinfo(image.dtype)
            fill = np.clip(np.round(fill), info.min, info.max)
        return fill.astype(image.dtype)


def occlude(image: np.ndarray, mask: np.ndarray, fill: FillStrategy) -> np.ndarray:
    """Replace pixels where `mask` is set; every other pixel is bit-identical."""
    image = np.asarray(image)
    mask = np.asarray(mask)
    if mask.shape != image.shape[:2]:
        raise DimensionMismatchError(
            f"mask shape {mask.shape} does not match image shape {image.shape[:2]}"
        )
    if mask.dtype != bool:
        if not np.isin(mask, (0, 1)).all():
            raise ValidationError("occlusion mask must be binary")
        mask = mask.astype(bool)
    out = image.copy()
    out[mask] = fill.resolve(image)
    return out


def masks_to_png(stack: RegionMaskStack, directory: str | Path, names: Sequence[str] | None = None) -> list[Path]:
    """Export each mask as a single-channel 0/255 PNG for debugging."""
    from PIL import Image

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for n in range(stack.size):
        label = names[n] if names else f"region{n:02d}"
        safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in label.lower())
        path = directory / f"{stack.image_id}_{n:02d}_{safe}.png"
        Image.fromarray(stack.masks[n].astype(np.uint8) * 255, mode="L").save(path)
        written.append(path)
    return written
