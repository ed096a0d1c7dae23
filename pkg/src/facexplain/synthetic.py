"""Synthetic embedders and fixtures with analytically known ground truth.

The region embedder maps an image to ``w_n * mean(image over region n)`` on
coordinate ``n`` plus a fixed positive offset, so the planted weights
``w_n`` are the exact region importances: occluding a region moves only its
own coordinate, a zero-weight region never moves the embedding, and the
ranking every attribution method should recover is simply the ordering of
``|w_n|``.
"""
from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np

from .embedder import Embedder
from .errors import ValidationError
from .semantics import LandmarkFile, RegionMaskStack, SemanticRegion, SemanticSet, build_masks

__all__ = [
    "SyntheticRegionEmbedder",
    "NoisyEmbedder",
    "make_grid_set",
    "grid_landmarks",
    "make_strip_set",
    "strip_landmarks",
    "grid_masks",
    "paint_regions",
    "region_intensities",
    "uniform_intensities",
    "descending_weights",
]


def _to_gray(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        image = image.mean(axis=2)
    return image


class SyntheticRegionEmbedder(Embedder):
    """Deterministic oracle embedder bound to one region-mask geometry.

    ``embedding[n] = weights[n] * mean(image over mask n) + offset[n]`` for
    ``n < s``; coordinates ``s..dim-1`` hold only the offset.  The offset is
    a fixed, seeded, strictly positive vector: embeddings are never zero
    (cosine stays defined) and the norm-1 of an embedding is exactly linear
    in the per-region means as long as all coordinates stay positive.
    """

    def __init__(
        self,
        masks: RegionMaskStack | np.ndarray,
        weights: Sequence[float],
        dim: int | None = None,
        seed: int = 0,
        model_id: str = "synthetic",
        offset_scale: float = 0.05,
        activation_spatial: tuple[int, int] = (4, 4),
        channels: int | None = None,
    ):
        mask_arr = masks.masks if isinstance(masks, RegionMaskStack) else np.asarray(masks, dtype=bool)
        weights = np.asarray(weights, dtype=np.float64)
        s = weights.size
        if mask_arr.shape[0] != s:
            raise ValidationError(f"{s} weights for {mask_arr.shape[0]} region masks")
        dim = s if dim is None else int(dim)
        if dim < s:
            raise ValidationError(f"embedding dim {dim} smaller than region count {s}")
        self.model_id = model_id
        self.weights = weights
        self.dim = dim
        self.seed = seed
        self.image_shape = mask_arr.shape[1:]
        flat = mask_arr.reshape(s, -1).astype(np.float64)
        areas = flat.sum(axis=1)
        nonzero = areas > 0
        flat[nonzero] /= areas[nonzero, None]
        self._mean_extractor = flat  # (s, pixels); row n averages region n
        rng = np.random.default_rng(seed)
        self.offset = offset_scale * rng.uniform(0.5, 1.5, size=dim)
        self._channels = dim if channels is None else int(channels)
        # unit-Frobenius spatial patterns: the full stack norm equals the
        # norm of the channel vector, so grouped and ungrouped rank analyses
        # coincide for the degenerate all-channel group
        pat = rng.uniform(0.2, 1.0, size=(self._channels, *activation_spatial))
        pat /= np.linalg.norm(pat.reshape(self._channels, -1), axis=1)[:, None, None]
        self._patterns = pat
        if self._channels == dim:
            self._channel_mix = None
        else:
            self._channel_mix = rng.normal(size=(self._channels, dim)) / np.sqrt(dim)

    @property
    def size(self) -> int:
        return self.weights.size

    def region_means(self, image: np.ndarray) -> np.ndarray:
        image = _to_gray(image)
        if image.shape != self.image_shape:
            raise ValidationError(f"image shape {image.shape} does not match bound masks {self.image_shape}")
        return self._mean_extractor @ image.reshape(-1)

    def embed_vector(self, image: np.ndarray) -> np.ndarray:
        return self.embed_batch_vectors(np.asarray(image)[None])[0]

    def embed_batch_vectors(self, images) -> np.ndarray:
        if isinstance(images, np.ndarray) and images.ndim in (3, 4):
            batch = images
        else:
            batch = np.stack([np.asarray(img) for img in images])
        if batch.ndim == 4:
            batch = batch.mean(axis=3)
        batch = batch.astype(np.float64, copy=False)
        if batch.shape[1:] != self.image_shape:
            raise ValidationError(
                f"image shape {batch.shape[1:]} does not match bound masks {self.image_shape}"
            )
        means = batch.reshape(batch.shape[0], -1) @ self._mean_extractor.T  # (B, s)
        out = np.tile(self.offset, (batch.shape[0], 1))
        out[:, : self.size] += means * self.weights
        return out

    @property
    def has_activations(self) -> bool:
        return True

    @property
    def activation_channels(self) -> int:
        return self._channels

    def activations(self, image: np.ndarray) -> np.ndarray:
        emb = self.embed_vector(image)
        channel_values = emb if self._channel_mix is None else self._channel_mix @ emb
        return channel_values[:, None, None] * self._patterns


class NoisyEmbedder(Embedder):
    """Adds seeded Gaussian noise keyed by image content to another embedder.

    The noise is a pure function of (seed, image bytes), so repeated embeds
    of the same image agree and the embedding cache stays coherent.
    """

    def __init__(self, inner: Embedder, sigma: float, seed: int = 0):
        self.inner = inner
        self.sigma = float(sigma)
        self.seed = int(seed)
        self.model_id = f"{inner.model_id}+noise"

    def _noise(self, image: np.ndarray, dim: int) -> np.ndarray:
        digest = hashlib.blake2b(np.ascontiguousarray(image).tobytes(), digest_size=8).digest()
        key = int.from_bytes(digest, "little") ^ self.seed
        return np.random.default_rng(key).normal(0.0, self.sigma, size=dim)

    def embed_vector(self, image: np.ndarray) -> np.ndarray:
        vec = np.array(self.inner.embed_vector(image))
        return vec + self._noise(np.asarray(image), vec.size)

    @property
    def has_activations(self) -> bool:
        return self.inner.has_activations

    def activations(self, image: np.ndarray) -> np.ndarray:
        return self.inner.activations(image)

    @property
    def activation_channels(self) -> int:
        return self.inner.activation_channels


# ---------------------------------------------------------------------------
# Tiny-mesh fixtures


def make_grid_set(rows: int, cols: int, set_id: str | None = None) -> SemanticSet:
    """A rows x cols grid of rectangular regions over a (rows+1)(cols+1) corner mesh."""
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ValidationError("grid set needs at least 2 cells")
    mesh_size = (rows + 1) * (cols + 1)

    def corner(i, j):
        return i * (cols + 1) + j

    regions = []
    for i in range(rows):
        for j in range(cols):
            poly = (corner(i, j), corner(i, j + 1), corner(i + 1, j + 1), corner(i + 1, j))
            regions.append(SemanticRegion(name=f"cell_{i}{j}" if rows > 1 else f"cell_{j}", polygons=(poly,)))
    return SemanticSet(set_id=set_id or f"grid{rows}x{cols}", mesh_size=mesh_size, regions=tuple(regions))


def grid_landmarks(rows: int, cols: int, width: int, height: int, image_id: str) -> LandmarkFile:
    """Corner mesh for :func:`make_grid_set`; cells partition the raster exactly."""
    xs = np.array([j * width / cols for j in range(cols)] + [width - 0.25])
    ys = np.array([i * height / rows for i in range(rows)] + [height - 0.25])
    pts = np.array([(x, y) for y in ys for x in xs])
    return LandmarkFile(
        image_id=image_id, width=width, height=height, mesh_size=(rows + 1) * (cols + 1), points=pts
    )


def make_strip_set(s: int, set_id: str | None = None) -> SemanticSet:
    """``s`` vertical strips; the simplest fixture geometry."""
    return make_grid_set(1, s, set_id=set_id or f"strips{s}")


def strip_landmarks(s: int, width: int, height: int, image_id: str) -> LandmarkFile:
    return grid_landmarks(1, s, width, height, image_id)


def grid_masks(rows: int, cols: int, width: int, height: int, image_id: str = "grid") -> RegionMaskStack:
    return build_masks(grid_landmarks(rows, cols, width, height, image_id), make_grid_set(rows, cols))


def paint_regions(masks: RegionMaskStack | np.ndarray, intensities: Sequence[float], base: float = 0.0) -> np.ndarray:
    """Float image where each region holds a constant intensity."""
    mask_arr = masks.masks if isinstance(masks, RegionMaskStack) else np.asarray(masks, dtype=bool)
    intensities = np.asarray(intensities, dtype=np.float64)
    if intensities.size != mask_arr.shape[0]:
        raise ValidationError(f"{intensities.size} intensities for {mask_arr.shape[0]} regions")
    img = np.full(mask_arr.shape[1:], float(base))
    for n in range(mask_arr.shape[0]):
        img[mask_arr[n]] = base + intensities[n]
    return img


def region_intensities(s: int, image_index: int, seed: int = 0, low: float = 120.0,
                       high: float = 230.0, jitter: float = 0.05) -> np.ndarray:
    """Per-region intensities for one fixture image: a fixed ramp plus a
    seeded per-image jitter, keeping region means well away from zero."""
    base = np.linspace(low, high, s)
    rng = np.random.default_rng((seed, image_index))
    return base * (1.0 + jitter * rng.uniform(-1.0, 1.0, size=s))


def uniform_intensities(s: int, image_index: int, seed: int = 0, level: float = 210.0,
                        jitter: float = 0.06) -> np.ndarray:
    """One shared intensity per image (seeded per-image scale).

    With every region equally far from the fill value, the occlusion effect
    of region n is proportional to the planted weight w_n alone, so the
    planted ordering is the exact ground truth for ranking recovery."""
    rng = np.random.default_rng((seed, image_index))
    return np.full(s, level * (1.0 + jitter * rng.uniform(-1.0, 1.0)))


def descending_weights(s: int, top: float = 2.0, bottom: float = 0.2) -> np.ndarray:
    """Well-separated planted weights, most important region first."""
    return np.linspace(top, bottom, s)
