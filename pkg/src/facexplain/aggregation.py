"""Borda-count rank aggregation and the global concept weights.

A region at position p of one ranking earns s-1-p points (classic Borda
schedule); summed points over all rankings define the global order O, and
region n's weight is g_n = s - O_n, so the globally most important region
multiplies its perturbation impact by s and the least important by 1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .concepts import ensure_ranking
from .errors import ValidationError

__all__ = [
    "GlobalConceptRanking",
    "borda_aggregate",
    "two_level_borda",
    "weights_from_ranking",
]


@dataclass(frozen=True)
class GlobalConceptRanking:
    """Aggregated region order plus the weights used by local explanations."""

    set_id: str
    method: str
    order: np.ndarray  # order[n] = global rank of region n, 0 = most important
    borda_points: np.ndarray
    weights: np.ndarray  # weights[n] = s - order[n]
    provenance: dict = field(default_factory=dict)
    region_names: tuple[str, ...] = ()

    def __post_init__(self):
        s = len(self.order)
        order = ensure_ranking(self.order, s)
        points = np.asarray(self.borda_points, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if points.shape != (s,) or weights.shape != (s,):
            raise ValidationError("order, borda_points and weights must have equal length")
        if not np.array_equal(weights, s - order):
            raise ValidationError("weights must equal s - order")
        by_rank = points[np.argsort(order, kind="stable")]
        if np.any(np.diff(by_rank) > 0):
            raise ValidationError("borda points must be nonincreasing along the global order")
        if self.region_names and len(self.region_names) != s:
            raise ValidationError("one region name per region required")
        for arr in (order, points, weights):
            arr.setflags(write=False)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "borda_points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return len(self.order)

    def sequence(self) -> np.ndarray:
        """Region indices from most to least important."""
        return np.argsort(self.order, kind="stable")

    def to_dict(self) -> dict:
        return {
            "set_id": self.set_id,
            "method": self.method,
            "order": [int(v) for v in self.order],
            "borda_points": [float(v) for v in self.borda_points],
            "weights": [float(v) for v in self.weights],
            "provenance": self.provenance,
            "region_names": list(self.region_names),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "GlobalConceptRanking":
        return cls(
            set_id=raw["set_id"],
            method=raw["method"],
            order=np.asarray(raw["order"], dtype=np.int64),
            borda_points=np.asarray(raw["borda_points"], dtype=np.float64),
            weights=np.asarray(raw["weights"], dtype=np.float64),
            provenance=raw.get("provenance", {}),
            region_names=tuple(raw.get("region_names", ())),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "GlobalConceptRanking":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_markdown(self) -> str:
        lines = ["| rank | region | points | weight |", "|---:|---|---:|---:|"]
        for rank, n in enumerate(self.sequence()):
            name = self.region_names[n] if self.region_names else f"region {n}"
            lines.append(f"| {rank} | {name} | {self.borda_points[n]:g} | {self.weights[n]:g} |")
        return "\n".join(lines) + "\n"


def borda_aggregate(
    rankings: Sequence[np.ndarray],
    *,
    set_id: str = "",
    method: str = "",
    region_names: Sequence[str] = (),
    provenance: dict | None = None,
) -> GlobalConceptRanking:
    """Merge per-image rankings: position p earns s-1-p points, totals sorted
    decreasing (ties by ascending region index) define the global order."""
    if len(rankings) == 0:
        raise ValidationError("Borda aggregation needs at least one ranking")
    s = len(rankings[0])
    points = np.zeros(s)
    schedule = np.arange(s - 1, -1, -1, dtype=np.float64)
    for ranking in rankings:
        seq = ensure_ranking(ranking, s)
        points[seq] += schedule
    order_seq = np.lexsort((np.arange(s), -points))  # region at each global rank
    order = np.empty(s, dtype=np.int64)
    order[order_seq] = np.arange(s)
    prov = dict(provenance or {})
    prov.setdefault("rankings", len(rankings))
    return GlobalConceptRanking(
        set_id=set_id,
        method=method,
        order=order,
        borda_points=points,
        weights=(s - order).astype(np.float64),
        provenance=prov,
        region_names=tuple(region_names),
    )


def two_level_borda(
    per_image_group_rankings: Sequence[Sequence[np.ndarray]],
    *,
    set_id: str = "",
    method: str = "",
    region_names: Sequence[str] = (),
    provenance: dict | None = None,
) -> GlobalConceptRanking:
    """Borda-merge each image's per-group rankings, then merge across images."""
    if len(per_image_group_rankings) == 0:
        raise ValidationError("two-level Borda needs at least one image")
    per_image = []
    for i, group_rankings in enumerate(per_image_group_rankings):
        if len(group_rankings) == 0:
            raise ValidationError(f"image {i}: empty group ranking list")
        per_image.append(borda_aggregate(list(group_rankings)).sequence())
    prov = dict(provenance or {})
    prov["images"] = len(per_image_group_rankings)
    prov["levels"] = 2
    return borda_aggregate(
        per_image, set_id=set_id, method=method, region_names=region_names, provenance=prov
    )


def weights_from_ranking(ranking: GlobalConceptRanking | np.ndarray) -> np.ndarray:
    """g_n = s - O_n: the top region weighs s, the bottom region 1."""
    if isinstance(ranking, GlobalConceptRanking):
        return np.array(ranking.weights)
    order = np.asarray(ranking, dtype=np.int64)
    ensure_ranking(order, order.size)
    return (order.size - order).astype(np.float64)
