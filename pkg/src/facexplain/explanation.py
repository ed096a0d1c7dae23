"""Per-pair local explanations: single-removal contributions, tables, maps.

For every region n, the region is occluded in BOTH images and the cosine
similarity recomputed.  The weighted score difference

    delta_s_n = g_n * (S_AB - S_A'(n)B'(n))

is scaled by the relative area weight W_n into the signed contribution
C_n = delta_s_n * W_n.  Positive contributions (the region supports the
perceived similarity) and negative ones are normalized separately by the
absolute sum of their sign group, so positives sum to +1 and negatives to
-1 whenever the group is nonempty.  Maps paint each pixel of region n with
the region's normalized contribution.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .aggregation import GlobalConceptRanking
from .embedder import Embedder
from .errors import ValidationError, ZeroNormError
from .semantics import FillStrategy, RegionMaskStack

__all__ = [
    "SimilarityExplanation",
    "ContributionTable",
    "single_removal_s0",
    "top_k_select",
    "contribution_table",
    "render_map",
    "Palette",
]


@dataclass(frozen=True)
class SimilarityExplanation:
    """Everything produced by the single-removal pass over one image pair."""

    image_id_a: str
    image_id_b: str
    set_id: str
    region_names: tuple[str, ...]
    s_ab: float
    raw_diff: np.ndarray  # S_AB - S_A'(n)B'(n)
    delta_s: np.ndarray  # g_n * raw_diff
    area_weights: np.ndarray  # W_(A,B)n
    contributions: np.ndarray  # C_n = delta_s * W_n
    normalized: np.ndarray  # sign-group normalized C_n
    global_weights: np.ndarray  # g_n
    fill: str
    ranking_method: str
    skipped: tuple[int, ...] = ()
    metadata: dict = field(default_factory=dict)
    map_a: np.ndarray | None = None
    map_b: np.ndarray | None = None
    # raster context, kept for rendering but never serialized
    image_a: np.ndarray | None = None
    image_b: np.ndarray | None = None
    masks_a: RegionMaskStack | None = None
    masks_b: RegionMaskStack | None = None

    @property
    def size(self) -> int:
        return len(self.region_names)

    @property
    def pair_id(self) -> str:
        return f"{self.image_id_a}__{self.image_id_b}"

    def to_dict(self) -> dict:
        return {
            "image_id_a": self.image_id_a,
            "image_id_b": self.image_id_b,
            "set_id": self.set_id,
            "region_names": list(self.region_names),
            "s_ab": self.s_ab,
            "raw_diff": [float(v) for v in self.raw_diff],
            "delta_s": [float(v) for v in self.delta_s],
            "area_weights": [float(v) for v in self.area_weights],
            "contributions": [float(v) for v in self.contributions],
            "normalized": [float(v) for v in self.normalized],
            "global_weights": [float(v) for v in self.global_weights],
            "fill": self.fill,
            "ranking_method": self.ranking_method,
            "skipped": list(self.skipped),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SimilarityExplanation":
        return cls(
            image_id_a=raw["image_id_a"],
            image_id_b=raw["image_id_b"],
            set_id=raw["set_id"],
            region_names=tuple(raw["region_names"]),
            s_ab=float(raw["s_ab"]),
            raw_diff=np.asarray(raw["raw_diff"], dtype=np.float64),
            delta_s=np.asarray(raw["delta_s"], dtype=np.float64),
            area_weights=np.asarray(raw["area_weights"], dtype=np.float64),
            contributions=np.asarray(raw["contributions"], dtype=np.float64),
            normalized=np.asarray(raw["normalized"], dtype=np.float64),
            global_weights=np.asarray(raw["global_weights"], dtype=np.float64),
            fill=raw["fill"],
            ranking_method=raw["ranking_method"],
            skipped=tuple(raw.get("skipped", ())),
            metadata=raw.get("metadata", {}),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SimilarityExplanation":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _paint(normalized: np.ndarray, masks: RegionMaskStack) -> np.ndarray:
    out = np.zeros(masks.shape, dtype=np.float64)
    for n in range(masks.size):
        out += normalized[n] * masks.masks[n]
    return out


def _normalize_by_sign(contributions: np.ndarray) -> np.ndarray:
    normalized = np.zeros_like(contributions)
    pos = contributions >= 0
    pos_sum = np.abs(contributions[pos]).sum()
    if pos_sum > 0:
        normalized[pos] = contributions[pos] / pos_sum
    neg = ~pos
    neg_sum = np.abs(contributions[neg]).sum()
    if neg_sum > 0:
        normalized[neg] = contributions[neg] / neg_sum
    return normalized


def single_removal_s0(
    embedder: Embedder,
    image_a: np.ndarray,
    image_b: np.ndarray,
    masks_a: RegionMaskStack,
    masks_b: RegionMaskStack,
    ranking: GlobalConceptRanking | None,
    fill: FillStrategy,
    *,
    region_names: tuple[str, ...] | None = None,
    area_weighting: bool = True,
) -> SimilarityExplanation:
    """Single-removal explanation of one verification pair.

    ``ranking=None`` runs the unweighted ablation (g_n = 1 for every n),
    reproducing the plain single-removal algorithm without global concept
    weighting.
    """
    if masks_a.set_id != masks_b.set_id or masks_a.size != masks_b.size:
        raise ValidationError(
            f"mask stacks come from different sets: '{masks_a.set_id}' vs '{masks_b.set_id}'"
        )
    s = masks_a.size
    if ranking is not None:
        if ranking.size != s:
            raise ValidationError(f"ranking covers {ranking.size} regions, masks have {s}")
        g = np.array(ranking.weights)
        ranking_method = ranking.method or "global"
    else:
        g = np.ones(s)
        ranking_method = "uniform"
    if region_names is None:
        region_names = tuple(ranking.region_names) if ranking is not None and ranking.region_names else tuple(
            f"region {n}" for n in range(s)
        )
    if len(region_names) != s:
        raise ValidationError(f"{len(region_names)} region names for {s} regions")

    image_a = np.asarray(image_a, dtype=np.float64)
    image_b = np.asarray(image_b, dtype=np.float64)
    vec_a = embedder.embed_vector(image_a)
    vec_b = embedder.embed_vector(image_b)
    s_ab = _cosine(vec_a, vec_b, "the original pair")

    areas_a = masks_a.areas.astype(np.float64)
    areas_b = masks_b.areas.astype(np.float64)
    facial = np.ones(s, dtype=bool)
    bg_a = _background_index(masks_a, region_names)
    if bg_a is not None:
        facial[bg_a] = False
    denom = areas_a[facial].sum() + areas_b[facial].sum()
    if area_weighting and denom > 0:
        w = (areas_a + areas_b) / denom
    else:
        w = np.ones(s)

    skipped = []
    occ_a = np.empty((s, *image_a.shape))
    occ_b = np.empty((s, *image_b.shape))
    fill_a = fill.resolve(image_a)
    fill_b = fill.resolve(image_b)
    for n in range(s):
        occ_a[n] = np.where(masks_a.masks[n][..., None] if image_a.ndim == 3 else masks_a.masks[n],
                            fill_a, image_a)
        occ_b[n] = np.where(masks_b.masks[n][..., None] if image_b.ndim == 3 else masks_b.masks[n],
                            fill_b, image_b)
    vecs_a = embedder.embed_batch_vectors(occ_a)
    vecs_b = embedder.embed_batch_vectors(occ_b)

    raw_diff = np.zeros(s)
    for n in range(s):
        if areas_a[n] + areas_b[n] == 0:
            warnings.warn(f"region '{region_names[n]}' has zero area in both images; contribution set to 0")
            skipped.append(n)
            continue
        s_occ = _cosine(vecs_a[n], vecs_b[n], f"region '{region_names[n]}' occluded")
        raw_diff[n] = s_ab - s_occ

    delta_s = g * raw_diff
    contributions = delta_s * w
    normalized = _normalize_by_sign(contributions)

    return SimilarityExplanation(
        image_id_a=masks_a.image_id,
        image_id_b=masks_b.image_id,
        set_id=masks_a.set_id,
        region_names=tuple(region_names),
        s_ab=s_ab,
        raw_diff=raw_diff,
        delta_s=delta_s,
        area_weights=w,
        contributions=contributions,
        normalized=normalized,
        global_weights=g,
        fill=fill.label,
        ranking_method=ranking_method,
        skipped=tuple(skipped),
        metadata={
            "area_weighting": bool(area_weighting and denom > 0),
            "top_k_basis": "abs-contribution",
            "model_id": embedder.model_id,
        },
        map_a=_paint(normalized, masks_a),
        map_b=_paint(normalized, masks_b),
        image_a=image_a,
        image_b=image_b,
        masks_a=masks_a,
        masks_b=masks_b,
    )


def _cosine(va: np.ndarray, vb: np.ndarray, context: str) -> float:
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError(f"zero-norm embedding for {context}; cosine undefined")
    if np.array_equal(va, vb):  # identical pairs score exactly 1, no epsilon
        return 1.0
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def _background_index(masks: RegionMaskStack, region_names) -> int | None:
    for n, name in enumerate(region_names):
        if name.lower() == "background":
            return n
    return None


def top_k_select(expl: SimilarityExplanation, k: int) -> np.ndarray:
    """The k regions with the greatest local impact |C_n| (which already
    embeds the global weight g_n); ties break by ascending region index."""
    if not 1 <= k <= expl.size:
        raise ValidationError(f"k must be in 1..{expl.size}, got {k}")
    order = np.lexsort((np.arange(expl.size), -np.abs(expl.contributions)))
    return order[:k]


# ---------------------------------------------------------------------------
# Contribution tables


@dataclass(frozen=True)
class ContributionTable:
    """Two blocks of (region, value): negative then positive, each ascending
    by signed value (dissimilar block first, magnitudes dominate each block)."""

    negative: tuple[tuple[str, float], ...]
    positive: tuple[tuple[str, float], ...]

    def rows(self) -> list[tuple[str, str, float]]:
        out = [("negative", name, value) for name, value in self.negative]
        out += [("positive", name, value) for name, value in self.positive]
        return out

    def to_markdown(self) -> str:
        lines = ["| Negative | Value | Positive | Value |", "|---|---:|---|---:|"]
        height = max(len(self.negative), len(self.positive), 1)
        for i in range(height):
            neg = self.negative[i] if i < len(self.negative) else ("", None)
            pos = self.positive[i] if i < len(self.positive) else ("", None)
            cells = [
                f"'{neg[0]}'" if neg[0] else "",
                f"{neg[1]:.4f}" if neg[1] is not None else "",
                f"'{pos[0]}'" if pos[0] else "",
                f"{pos[1]:.4f}" if pos[1] is not None else "",
            ]
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["block", "region", "value"])
        for block, name, value in self.rows():
            writer.writerow([block, name, f"{value:.4f}"])
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "negative": [[name, round(value, 4)] for name, value in self.negative],
            "positive": [[name, round(value, 4)] for name, value in self.positive],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def listing(self) -> str:
        """The two-block region/value listing substituted into LLM prompts."""
        neg = "; ".join(f"'{name}': {value:.4f}" for name, value in self.negative) or "(none)"
        pos = "; ".join(f"'{name}': {value:.4f}" for name, value in self.positive) or "(none)"
        return f"Negative: {neg}. Positive: {pos}"


def contribution_table(expl: SimilarityExplanation, k: int | None = None) -> ContributionTable:
    """Signed contributions split into blocks; zero values count as positive
    ("similar when the value is positive or equal to zero")."""
    if k is None:
        selected = np.arange(expl.size)
    else:
        selected = top_k_select(expl, k)
    values = expl.contributions[selected]
    order = np.lexsort((selected, values))  # ascending value, ties by region index
    negative = []
    positive = []
    for pos_idx in order:
        n = selected[pos_idx]
        value = float(expl.contributions[n])
        row = (expl.region_names[n], value)
        (negative if value < 0 else positive).append(row)
    return ContributionTable(negative=tuple(negative), positive=tuple(positive))


# ---------------------------------------------------------------------------
# Map rendering


@dataclass(frozen=True)
class Palette:
    """Hue anchors: saturated orange for similarity, saturated purple for
    dissimilarity, linear intensity ramps."""

    similar: tuple[int, int, int] = (255, 140, 0)
    dissimilar: tuple[int, int, int] = (128, 0, 160)
    max_opacity: float = 0.75
    legend_height: int = 12


def _tint(base: np.ndarray, normalized: np.ndarray, masks: RegionMaskStack,
          selected: np.ndarray, palette: Palette) -> np.ndarray:
    if base.ndim == 2:
        rgb = np.stack([base] * 3, axis=2)
    else:
        rgb = base.astype(np.float64).copy()
    peak = np.abs(normalized[selected]).max() if selected.size else 0.0
    for n in selected:
        value = normalized[n]
        strength = 0.0 if peak == 0 else abs(value) / peak
        if strength == 0.0:
            continue
        color = np.array(palette.similar if value >= 0 else palette.dissimilar, dtype=np.float64)
        alpha = palette.max_opacity * strength
        region = masks.masks[n]
        rgb[region] = (1 - alpha) * rgb[region] + alpha * color
    return rgb


def _legend(width: int, palette: Palette) -> np.ndarray:
    ramp = np.linspace(-1.0, 1.0, width)
    strip = np.zeros((palette.legend_height, width, 3))
    for c, value in enumerate(ramp):
        color = np.array(palette.similar if value >= 0 else palette.dissimilar, dtype=np.float64)
        strip[:, c] = abs(value) * color + (1 - abs(value)) * 255.0
    return strip


def render_map(expl: SimilarityExplanation, k: int = 10, palette: Palette | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Similarity-map overlays for both images plus a legend strip.

    Selected regions are tinted orange (normalized contribution >= 0) or
    purple (< 0) with opacity proportional to magnitude; unselected regions
    keep their original pixels.
    """
    if expl.image_a is None or expl.masks_a is None:
        raise ValidationError(
            "this explanation was deserialized without raster context; re-run single_removal_s0 to render maps"
        )
    palette = palette or Palette()
    selected = top_k_select(expl, k)
    out = []
    for base, masks in ((expl.image_a, expl.masks_a), (expl.image_b, expl.masks_b)):
        tinted = _tint(np.asarray(base, dtype=np.float64), expl.normalized, masks, selected, palette)
        withlegend = np.vstack([tinted, _legend(tinted.shape[1], palette)])
        out.append(np.clip(np.round(withlegend), 0, 255).astype(np.uint8))
    return out[0], out[1]


def save_map_png(image: np.ndarray, path: str | Path) -> None:
    Image.fromarray(image).save(path, format="PNG")
