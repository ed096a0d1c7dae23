"""Rank-based concept extraction over the embedding output space.

The core signal: order all calibration images by the Euclidean norm of
their embedding (most to least distant from the origin).  Occluding one
semantic region of one image perturbs only that image's norm; the region's
importance for the image is how many rank positions the image moves in the
re-sorted sequence.  Because only a single value changes, the new rank is
answered with a binary-search query against the original sorted norms,
which is exactly equivalent to a full re-sort.

Concept groups partition the model's activation channels so the same rank
displacement can be measured separately per group of channels ("parts of
the network"), with the per-group region rankings merged by Borda count.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .embedder import Embedder
from .errors import ValidationError
from .semantics import FillStrategy, RegionMaskStack, occlude

__all__ = [
    "Attribution",
    "OutputSpaceDistances",
    "ConceptGroups",
    "rank_by_scores",
    "ensure_ranking",
    "output_space",
    "order_sequence",
    "RankQuery",
    "rank_displacement",
    "eaoc_score",
    "eaoc_attribution",
    "group_output_space",
    "mage_concept_groups",
]

METHOD_EAOC = "eaoc"
METHOD_LIME = "lime"
METHOD_KERNELSHAP = "kernelshap"


def rank_by_scores(scores: np.ndarray) -> np.ndarray:
    """Region indices from most to least important; ties by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


def ensure_ranking(sequence, s: int) -> np.ndarray:
    seq = np.asarray(sequence, dtype=np.int64)
    if seq.shape != (s,) or not np.array_equal(np.sort(seq), np.arange(s)):
        raise ValidationError(f"not a permutation of 0..{s - 1}: {sequence}")
    return seq


@dataclass(frozen=True)
class Attribution:
    """Per-region importance scores from one method on one image."""

    image_id: str
    method: str
    set_id: str
    scores: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.size == 0:
            raise ValidationError(f"scores must be a nonempty vector, got shape {scores.shape}")
        if not np.all(np.isfinite(scores)):
            raise ValidationError(f"{self.image_id}/{self.method}: non-finite attribution scores")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def size(self) -> int:
        return self.scores.size

    def ranking(self) -> np.ndarray:
        return rank_by_scores(self.scores)

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "method": self.method,
            "set_id": self.set_id,
            "scores": [float(v) for v in self.scores],
            "ranking": [int(i) for i in self.ranking()],
            "config": self.metadata,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class OutputSpaceDistances:
    """Embedding norms of a calibration dataset, manifest order preserved."""

    values: np.ndarray
    image_ids: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValidationError("distances must be a nonempty vector")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValidationError("distances must be finite and nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.image_ids and len(self.image_ids) != values.size:
            raise ValidationError("one image id per distance value required")

    @property
    def size(self) -> int:
        return self.values.size


def output_space(embedder: Embedder, images: Sequence[np.ndarray],
                 image_ids: Sequence[str] | None = None) -> OutputSpaceDistances:
    """Norm-2 of every image's embedding, aligned with the input order."""
    if len(images) == 0:
        raise ValidationError("output space requires a nonempty dataset")
    vectors = embedder.embed_batch_vectors(images)
    return OutputSpaceDistances(
        values=np.linalg.norm(vectors, axis=1),
        image_ids=tuple(image_ids) if image_ids else (),
    )


def order_sequence(distances: OutputSpaceDistances | np.ndarray) -> np.ndarray:
    """Image indices sorted by decreasing distance; ties by ascending index."""
    values = distances.values if isinstance(distances, OutputSpaceDistances) else np.asarray(distances)
    return np.lexsort((np.arange(values.size), -values))


class RankQuery:
    """Answers 'where would image j rank if only its value changed?'.

    Equivalent to re-sorting the full sequence with image j's value replaced
    (decreasing order, ties broken by ascending index) but answered in
    O(log N) per query against the presorted original values.
    """

    def __init__(self, values: np.ndarray):
        self.values = np.asarray(values, dtype=np.float64)
        self._sorted = np.sort(self.values)
        self._asc_order = np.argsort(self.values, kind="stable")

    def original_rank(self, j: int) -> int:
        return self.rank_with_value(j, float(self.values[j]))

    def rank_with_value(self, j: int, new_value: float) -> int:
        n = self.values.size
        hi = int(np.searchsorted(self._sorted, new_value, side="right"))
        greater = n - hi
        if self.values[j] > new_value:
            greater -= 1
        lo = int(np.searchsorted(self._sorted, new_value, side="left"))
        ties_before = 0
        for idx in self._asc_order[lo:hi]:
            if idx < j:
                ties_before += 1
        return greater + ties_before

    def displacement(self, j: int, new_value: float) -> int:
        return abs(self.original_rank(j) - self.rank_with_value(j, new_value))


def rank_displacement(values: np.ndarray, j: int, new_value: float) -> int:
    """One-shot rank displacement; see :class:`RankQuery` for the batched form."""
    return RankQuery(values).displacement(j, new_value)


def eaoc_score(
    embedder: Embedder,
    images: Sequence[np.ndarray],
    j: int,
    region_mask: np.ndarray,
    fill: FillStrategy,
    distances: OutputSpaceDistances | None = None,
) -> int:
    """Rank displacement of image ``j`` caused by occluding one region."""
    if distances is None:
        distances = output_space(embedder, images)
    occluded = occlude(np.asarray(images[j]), region_mask, fill)
    new_norm = float(np.linalg.norm(embedder.embed_vector(occluded)))
    return RankQuery(distances.values).displacement(j, new_norm)


def _activation_group_norms(embedder: Embedder, image: np.ndarray, groups: "ConceptGroups") -> np.ndarray:
    stack = np.asarray(embedder.activations(image), dtype=np.float64)
    return np.array([np.linalg.norm(stack[list(ch)].ravel()) for ch in groups.channel_groups])


def group_output_space(embedder: Embedder, images: Sequence[np.ndarray], groups: "ConceptGroups") -> np.ndarray:
    """(K, N) per-group activation norms over the calibration dataset."""
    if len(images) == 0:
        raise ValidationError("output space requires a nonempty dataset")
    groups.check_against(embedder)
    cols = [_activation_group_norms(embedder, img, groups) for img in images]
    return np.stack(cols, axis=1)


def eaoc_attribution(
    embedder: Embedder,
    images: Sequence[np.ndarray],
    j: int,
    masks: RegionMaskStack,
    fill: FillStrategy,
    *,
    distances: OutputSpaceDistances | None = None,
    groups: "ConceptGroups | None" = None,
    group_signals: np.ndarray | None = None,
    image_id: str | None = None,
) -> Attribution:
    """Per-region rank-displacement scores for image ``j``.

    Without groups the displacement is measured in the embedding-norm
    ordering and the score is the displacement itself.  With groups, each
    group of activation channels yields its own region ranking; the
    rankings are Borda-merged and region ``n`` scores ``s - position_n``.
    """
    image = np.asarray(images[j])
    s = masks.size
    occluded_stack = np.stack([occlude(image, masks.masks[n], fill) for n in range(s)])
    meta = {"fill": fill.label, "dataset_size": len(images)}
    if groups is None:
        if distances is None:
            distances = output_space(embedder, images)
        query = RankQuery(distances.values)
        norms = np.linalg.norm(embedder.embed_batch_vectors(occluded_stack), axis=1)
        scores = np.array([query.displacement(j, float(v)) for v in norms], dtype=np.float64)
    else:
        from .aggregation import borda_aggregate

        groups.check_against(embedder)
        if group_signals is None:
            group_signals = group_output_space(embedder, images, groups)
        k = len(groups.channel_groups)
        per_group_scores = np.zeros((k, s))
        occ_signals = np.stack([_activation_group_norms(embedder, occ, groups) for occ in occluded_stack])
        for g in range(k):
            query = RankQuery(group_signals[g])
            per_group_scores[g] = [query.displacement(j, float(v)) for v in occ_signals[:, g]]
        merged = borda_aggregate([rank_by_scores(per_group_scores[g]) for g in range(k)],
                                 set_id=masks.set_id, method=METHOD_EAOC)
        scores = (s - merged.order).astype(np.float64)
        meta["concept_groups"] = [list(ch) for ch in groups.channel_groups]
    return Attribution(
        image_id=image_id or masks.image_id,
        method=METHOD_EAOC,
        set_id=masks.set_id,
        scores=scores,
        metadata=meta,
    )


# ---------------------------------------------------------------------------
# Concept groups (channel clustering)


@dataclass(frozen=True)
class ConceptGroups:
    """Disjoint channel groups covering all activation channels."""

    channel_groups: tuple[tuple[int, ...], ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        groups = tuple(tuple(int(c) for c in g) for g in self.channel_groups)
        if not groups:
            raise ValidationError("at least one concept group required")
        flat = [c for g in groups for c in g]
        if len(flat) != len(set(flat)):
            raise ValidationError("concept groups must be disjoint")
        object.__setattr__(self, "channel_groups", groups)

    @property
    def channel_count(self) -> int:
        return sum(len(g) for g in self.channel_groups)

    def check_against(self, embedder: Embedder) -> None:
        available = embedder.activation_channels
        flat = sorted(c for g in self.channel_groups for c in g)
        unknown = [c for c in flat if c < 0 or c >= available]
        if unknown:
            raise ValidationError(f"concept groups reference unknown channels {unknown} (model has {available})")
        if flat != list(range(available)):
            raise ValidationError("concept groups must cover every activation channel exactly once")


def _kmeans(points: np.ndarray, k: int, seed: int, iters: int = 100) -> np.ndarray:
    """Seeded k-means++ init plus Lloyd iterations; deterministic labels."""
    rng = np.random.default_rng(seed)
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    dist2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = dist2.sum()
        if total == 0:
            centroids[c:] = points[rng.integers(n, size=k - c)]
            break
        centroids[c] = points[rng.choice(n, p=dist2 / total)]
        dist2 = np.minimum(dist2, np.sum((points - centroids[c]) ** 2, axis=1))
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        for c in range(k):
            member = new_labels == c
            if member.any():
                centroids[c] = points[member].mean(axis=0)
            else:  # revive an empty cluster with the farthest point
                far = d2.min(axis=1).argmax()
                centroids[c] = points[far]
                new_labels[far] = c
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels


def mage_concept_groups(embedder: Embedder, images: Sequence[np.ndarray], k: int, seed: int = 0) -> ConceptGroups:
    """Cluster activation channels by their behavior across a dataset.

    Each channel's signature is its mean spatial activation on every
    calibration image; channels responding alike end up in one group.
    """
    if len(images) == 0:
        raise ValidationError("concept grouping requires a nonempty dataset")
    channels = embedder.activation_channels
    if not 1 <= k <= channels:
        raise ValidationError(f"group count {k} outside 1..{channels}")
    signatures = np.stack(
        [np.asarray(embedder.activations(img), dtype=np.float64).mean(axis=(1, 2)) for img in images],
        axis=1,
    )  # (channels, dataset size)
    if k == 1:
        labels = np.zeros(channels, dtype=np.int64)
    elif k == channels:
        labels = np.arange(channels, dtype=np.int64)
    else:
        labels = _kmeans(signatures, k, seed)
    raw_groups = [tuple(np.nonzero(labels == c)[0].tolist()) for c in range(k)]
    raw_groups = [g for g in raw_groups if g]
    raw_groups.sort(key=lambda g: g[0])
    return ConceptGroups(
        channel_groups=tuple(raw_groups),
        metadata={"k": k, "seed": seed, "dataset_size": len(images), "signature": "mean-spatial-activation"},
    )
