"""Faithfulness curves: cumulative occlusion of top-ranked concepts.

For k = 1..s the union of the k globally most important regions is occluded
(cumulatively, so the x axis counts occluded parts) and the displacement of
the model's output is averaged over the dataset: Euclidean distance between
original and occluded embeddings for the representation target, |S_AB -
S_A(k)B(k)| for the similarity target.  Random-order baselines bound the
methods from below; at k = s every order coincides because the full face is
occluded either way.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregation import GlobalConceptRanking
from .concepts import ensure_ranking
from .embedder import Embedder
from .errors import ValidationError, ZeroNormError
from .semantics import FillStrategy, RegionMaskStack

__all__ = [
    "OcclusionCurve",
    "RandomBaseline",
    "DominanceReport",
    "representation_curve",
    "similarity_curve",
    "random_baseline",
    "dominance_report",
    "plot_curves",
]

TARGET_REPRESENTATION = "representation"
TARGET_SIMILARITY = "similarity"


@dataclass(frozen=True)
class OcclusionCurve:
    method: str
    set_id: str
    model_id: str
    target: str
    mean: np.ndarray  # value per k, k = 1..s
    raw: np.ndarray  # (images or pairs) x s

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        raw = np.asarray(self.raw, dtype=np.float64)
        if raw.ndim != 2 or mean.shape != (raw.shape[1],):
            raise ValidationError("curve needs raw (items, s) and one mean per k")
        if np.any(mean < 0) or np.any(raw < 0):
            raise ValidationError("occlusion curves are nonnegative by construction")
        mean.setflags(write=False)
        raw.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "raw", raw)

    @property
    def size(self) -> int:
        return self.mean.size

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.size + 1)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "target": self.target,
            "set_id": self.set_id,
            "model_id": self.model_id,
            "k": [int(v) for v in self.k],
            "mean": [float(v) for v in self.mean],
            "raw_shape": list(self.raw.shape),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class RandomBaseline:
    """Mean curve over independent random region orders."""

    trials: tuple[OcclusionCurve, ...]
    seed: int
    mean: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.trials:
            raise ValidationError("random baseline needs at least one trial")
        stack = np.stack([t.mean for t in self.trials])
        mean = stack.mean(axis=0)
        # full occlusion (k = s) is order-invariant: where every trial agrees
        # bit-for-bit, the mean must not drift by an averaging ulp
        identical = (stack == stack[0]).all(axis=0)
        mean[identical] = stack[0][identical]
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)

    @property
    def size(self) -> int:
        return self.trials[0].size


def _cumulative_union(masks: RegionMaskStack, sequence: np.ndarray) -> np.ndarray:
    """(s, h, w) stack; layer k-1 is the union of the top-k regions."""
    out = np.empty((masks.size, *masks.shape), dtype=bool)
    acc = np.zeros(masks.shape, dtype=bool)
    for pos, region in enumerate(sequence):
        acc = acc | masks.masks[region]
        out[pos] = acc
    return out


def _occlude_stack(image: np.ndarray, unions: np.ndarray, fill: FillStrategy) -> np.ndarray:
    fill_value = fill.resolve(image)
    if image.ndim == 3:
        return np.where(unions[:, :, :, None], np.asarray(fill_value).reshape(1, 1, 1, -1),
                        image[None].astype(np.float64))
    return np.where(unions, float(fill_value), image[None].astype(np.float64))


def _sequence_of(ranking: GlobalConceptRanking | np.ndarray, s: int) -> np.ndarray:
    if isinstance(ranking, GlobalConceptRanking):
        seq = ranking.sequence()
    else:
        seq = np.asarray(ranking, dtype=np.int64)
    return ensure_ranking(seq, s)


def representation_curve(
    embedder: Embedder,
    images: Sequence[np.ndarray],
    ranking: GlobalConceptRanking | np.ndarray,
    masks: Sequence[RegionMaskStack],
    fill: FillStrategy,
    *,
    method: str = "",
    set_id: str = "",
) -> OcclusionCurve:
    """Mean embedding displacement as top-ranked regions are cumulatively occluded."""
    if len(images) == 0 or len(images) != len(masks):
        raise ValidationError("one mask stack per image required, dataset nonempty")
    s = masks[0].size
    sequence = _sequence_of(ranking, s)
    raw = np.empty((len(images), s))
    for i, (image, stack) in enumerate(zip(images, masks)):
        image = np.asarray(image, dtype=np.float64)
        original = embedder.embed_vector(image)
        occluded = _occlude_stack(image, _cumulative_union(stack, sequence), fill)
        vectors = embedder.embed_batch_vectors(occluded)
        raw[i] = np.linalg.norm(vectors - original[None, :], axis=1)
    return OcclusionCurve(
        method=method, set_id=set_id or masks[0].set_id, model_id=embedder.model_id,
        target=TARGET_REPRESENTATION, mean=raw.mean(axis=0), raw=raw,
    )


def similarity_curve(
    embedder: Embedder,
    pairs: Sequence[tuple[np.ndarray, np.ndarray, RegionMaskStack, RegionMaskStack]],
    ranking: GlobalConceptRanking | np.ndarray,
    fill: FillStrategy,
    *,
    method: str = "",
    set_id: str = "",
) -> OcclusionCurve:
    """Mean |S_AB - S_A(k)B(k)| with the top-k union occluded in both images."""
    if len(pairs) == 0:
        raise ValidationError("similarity curve needs at least one pair")
    s = pairs[0][2].size
    sequence = _sequence_of(ranking, s)
    raw = np.empty((len(pairs), s))
    for i, (image_a, image_b, masks_a, masks_b) in enumerate(pairs):
        image_a = np.asarray(image_a, dtype=np.float64)
        image_b = np.asarray(image_b, dtype=np.float64)
        base = _pair_cosine(
            embedder.embed_vector(image_a)[None], embedder.embed_vector(image_b)[None]
        )[0]
        occ_a = _occlude_stack(image_a, _cumulative_union(masks_a, sequence), fill)
        occ_b = _occlude_stack(image_b, _cumulative_union(masks_b, sequence), fill)
        scores = _pair_cosine(embedder.embed_batch_vectors(occ_a), embedder.embed_batch_vectors(occ_b))
        raw[i] = np.abs(base - scores)
    return OcclusionCurve(
        method=method, set_id=set_id or pairs[0][2].set_id, model_id=embedder.model_id,
        target=TARGET_SIMILARITY, mean=raw.mean(axis=0), raw=raw,
    )


def _pair_cosine(va: np.ndarray, vb: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(va, axis=1)
    nb = np.linalg.norm(vb, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ZeroNormError("zero-norm embedding while scoring an occluded pair")
    out = np.clip((va * vb).sum(axis=1) / (na * nb), -1.0, 1.0)
    out[np.all(va == vb, axis=1)] = 1.0  # identical rows score exactly 1
    return out


def random_baseline(
    embedder: Embedder,
    data,
    fill: FillStrategy,
    *,
    target: str,
    trials: int = 20,
    seed: int = 0,
    masks: Sequence[RegionMaskStack] | None = None,
    set_id: str = "",
    jobs: int = 1,
) -> RandomBaseline:
    """Occlusion curves for independently drawn random region orders.

    ``data`` is the images list (representation target, with ``masks``) or
    the pairs list (similarity target).  Permutations are drawn up front
    from the seed, so results do not depend on ``jobs``.
    """
    if trials < 1:
        raise ValidationError("at least one random trial required")
    if target == TARGET_REPRESENTATION:
        if masks is None:
            raise ValidationError("representation target needs per-image masks")
        s = masks[0].size
    elif target == TARGET_SIMILARITY:
        s = data[0][2].size
    else:
        raise ValidationError(f"unknown target '{target}'")
    rng = np.random.default_rng(seed)
    sequences = [rng.permutation(s) for _ in range(trials)]

    def one_trial(t: int) -> OcclusionCurve:
        if target == TARGET_REPRESENTATION:
            return representation_curve(embedder, data, sequences[t], masks, fill,
                                        method=f"random/{t}", set_id=set_id)
        return similarity_curve(embedder, data, sequences[t], fill,
                                method=f"random/{t}", set_id=set_id)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            curves = list(pool.map(one_trial, range(trials)))
    else:
        curves = [one_trial(t) for t in range(trials)]
    return RandomBaseline(trials=tuple(curves), seed=seed)


@dataclass(frozen=True)
class DominanceReport:
    """How often each method's mean curve sits on or above the random mean."""

    fractions: dict
    area_between: dict
    k_count: int

    def to_dict(self) -> dict:
        return {
            "dominance_fraction": {m: float(v) for m, v in self.fractions.items()},
            "area_between_curves": {m: float(v) for m, v in self.area_between.items()},
            "k_count": self.k_count,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def to_markdown(self) -> str:
        lines = ["| method | dominance fraction | area between curves |", "|---|---:|---:|"]
        for m in sorted(self.fractions):
            lines.append(f"| {m} | {self.fractions[m]:.3f} | {self.area_between[m]:.6g} |")
        return "\n".join(lines) + "\n"


def dominance_report(curves: dict[str, OcclusionCurve], baseline: RandomBaseline) -> DominanceReport:
    """Prefix-dominance fractions (ties count as dominance) and signed area
    between each method's mean curve and the random mean."""
    fractions = {}
    areas = {}
    for method, curve in curves.items():
        if curve.size != baseline.size:
            raise ValidationError(f"curve '{method}' has {curve.size} points, baseline {baseline.size}")
        fractions[method] = float(np.mean(curve.mean >= baseline.mean))
        areas[method] = float(np.trapezoid(curve.mean - baseline.mean, curve.k))
    return DominanceReport(fractions=fractions, area_between=areas, k_count=baseline.size)


def plot_curves(
    curves: dict[str, OcclusionCurve],
    baseline: RandomBaseline | None,
    path: str | Path,
    *,
    title: str = "",
) -> None:
    """Overlay method curves and the random baseline; SVG or PNG by suffix.

    Figure metadata is pinned so repeated runs emit byte-identical files.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "facexplain"
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for method in sorted(curves):
        curve = curves[method]
        ax.plot(curve.k, curve.mean, marker="o", markersize=3, label=method)
    if baseline is not None:
        ax.plot(np.arange(1, baseline.size + 1), baseline.mean, linestyle="--", color="gray",
                label=f"random (n={len(baseline.trials)})")
    ax.set_xlabel("number of occluded parts")
    ax.set_ylabel("mean output displacement")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    metadata = {"Date": None} if path.suffix == ".svg" else {}
    fig.savefig(path, metadata=metadata)
    plt.close(fig)
