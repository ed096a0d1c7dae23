"""Surrogate-model attributions over binary region-presence vectors.

Both methods perturb an image by occluding subsets of its semantic regions
and fit a weighted least-squares model of the response:

* LIME draws presence vectors uniformly and weights them by an exponential
  kernel on the cosine distance to the unperturbed vector; the surrogate
  approximates the norm of the embedding and its coefficients are the
  scores.
* KernelSHAP uses the Shapley kernel.  For small region counts (s <= 15)
  every coalition is enumerated and the Shapley values are computed
  exactly from the marginal-contribution formula; otherwise coalitions are
  sampled (complete subset sizes first, random draws for the remainder) and
  the values come from the kernel-weighted constrained solve.
"""
from __future__ import annotations

import math
from itertools import combinations
from typing import Callable

import numpy as np

from .concepts import METHOD_KERNELSHAP, METHOD_LIME, Attribution
from .embedder import CachingEmbedder, Embedder
from .errors import SingularSurrogateError, ValidationError, ZeroNormError
from .semantics import FillStrategy, RegionMaskStack

__all__ = [
    "lime_attribution",
    "kernelshap_attribution",
    "shapley_exact_values",
    "shapley_kernel_weights",
    "sample_shapley_coalitions",
    "shapley_kernel_solve",
    "presence_value_function",
]

EXACT_MODE_MAX_REGIONS = 15


# ---------------------------------------------------------------------------
# Perturbation rendering


def _render_presence(image: np.ndarray, masks_flat: np.ndarray, fill_value, presence: np.ndarray) -> np.ndarray:
    """Images with all absent regions occluded, one per presence row."""
    absent = 1.0 - presence
    occ = (absent @ masks_flat) > 0  # (batch, pixels)
    if image.ndim == 2:
        flat = image.reshape(-1).astype(np.float64)
        out = np.where(occ, float(fill_value), flat[None, :])
        return out.reshape(presence.shape[0], *image.shape)
    flat = image.reshape(-1, image.shape[2]).astype(np.float64)
    fill = np.asarray(fill_value, dtype=np.float64).reshape(1, 1, -1)
    out = np.where(occ[:, :, None], fill, flat[None, :, :])
    return out.reshape(presence.shape[0], *image.shape)


def presence_value_function(
    embedder: Embedder,
    image: np.ndarray,
    masks: RegionMaskStack,
    fill: FillStrategy,
    *,
    norm: int = 1,
    pair: tuple[np.ndarray, RegionMaskStack] | None = None,
    batch_size: int = 2048,
) -> Callable[[np.ndarray], np.ndarray]:
    """y(z) for presence vectors z: an embedding norm, or the pair cosine
    with the same regions occluded in both images."""
    # coalition renders are one-shot; content-hash caching them costs more
    # than it saves and the cached vectors would never be hit again
    if isinstance(embedder, CachingEmbedder):
        embedder = embedder.inner
    image = np.asarray(image, dtype=np.float64)
    flat_masks = masks.masks.reshape(masks.size, -1).astype(np.float64)
    fill_value = fill.resolve(image)
    if pair is not None:
        image_b = np.asarray(pair[0], dtype=np.float64)
        masks_b = pair[1]
        if masks_b.size != masks.size:
            raise ValidationError("pair value function needs equally sized mask stacks")
        flat_b = masks_b.masks.reshape(masks_b.size, -1).astype(np.float64)
        fill_b = fill.resolve(image_b)

    def value(presence: np.ndarray) -> np.ndarray:
        presence = np.asarray(presence, dtype=np.float64)
        out = np.empty(presence.shape[0])
        for start in range(0, presence.shape[0], batch_size):
            chunk = presence[start : start + batch_size]
            va = embedder.embed_batch_vectors(_render_presence(image, flat_masks, fill_value, chunk))
            if pair is None:
                out[start : start + chunk.shape[0]] = np.linalg.norm(va, ord=norm, axis=1)
            else:
                vb = embedder.embed_batch_vectors(_render_presence(image_b, flat_b, fill_b, chunk))
                na = np.linalg.norm(va, axis=1)
                nb = np.linalg.norm(vb, axis=1)
                if np.any(na == 0) or np.any(nb == 0):
                    raise ZeroNormError("an occluded embedding has zero norm; cosine undefined")
                scores = np.clip((va * vb).sum(axis=1) / (na * nb), -1.0, 1.0)
                scores[np.all(va == vb, axis=1)] = 1.0
                out[start : start + chunk.shape[0]] = scores
        return out

    return value


# ---------------------------------------------------------------------------
# LIME


def lime_attribution(
    embedder: Embedder,
    image: np.ndarray,
    masks: RegionMaskStack,
    fill: FillStrategy,
    *,
    samples: int,
    kernel_width: float = 0.25,
    ridge: float = 1e-3,
    seed: int = 0,
    norm: int = 1,
    image_id: str | None = None,
    batch_size: int = 2048,
) -> Attribution:
    """Ridge-regularized weighted linear surrogate of the embedding norm.

    Presence vectors are fair coin flips per region (the first sample is the
    all-present vector); sample weight is exp(-D^2 / kernel_width^2) with D
    the cosine distance to the all-present vector, so the unperturbed image
    has weight 1.  Scores are the surrogate coefficients.
    """
    s = masks.size
    if s < 2:
        raise ValidationError("LIME needs at least 2 regions")
    if samples < s + 1:
        raise ValidationError(f"{samples} samples cannot identify {s} coefficients plus an intercept")
    if norm not in (1, 2):
        raise ValidationError(f"norm must be 1 or 2, got {norm}")
    rng = np.random.default_rng(seed)
    presence = rng.integers(0, 2, size=(samples, s)).astype(np.float64)
    presence[0, :] = 1.0
    kept = presence.sum(axis=1)
    dist = np.ones(samples)
    nonzero = kept > 0
    dist[nonzero] = 1.0 - np.sqrt(kept[nonzero] / s)  # cosine distance of binary z to all-ones
    weights = np.exp(-(dist**2) / kernel_width**2)

    value = presence_value_function(embedder, image, masks, fill, norm=norm, batch_size=batch_size)
    y = value(presence)

    design = np.hstack([np.ones((samples, 1)), presence])
    sw = np.sqrt(weights)
    rows = design * sw[:, None]
    rhs = y * sw
    penalty = math.sqrt(ridge) * np.eye(s + 1)
    penalty[0, 0] = 0.0  # intercept is not shrunk
    system = np.vstack([rows, penalty])
    target = np.concatenate([rhs, np.zeros(s + 1)])
    beta, _, rank, _ = np.linalg.lstsq(system, target, rcond=None)
    if rank < s + 1:
        raise SingularSurrogateError(
            f"surrogate system is rank deficient (rank {rank} < {s + 1}); "
            "increase the ridge penalty or draw more samples"
        )
    return Attribution(
        image_id=image_id or masks.image_id,
        method=METHOD_LIME,
        set_id=masks.set_id,
        scores=beta[1:],
        metadata={
            "samples": samples,
            "kernel_width": kernel_width,
            "ridge": ridge,
            "seed": seed,
            "norm": norm,
            "fill": fill.label,
            "intercept": float(beta[0]),
        },
    )


# ---------------------------------------------------------------------------
# KernelSHAP


def shapley_exact_values(value: Callable[[np.ndarray], np.ndarray], s: int) -> tuple[np.ndarray, float, float]:
    """Exact Shapley values by full coalition enumeration (s <= 15).

    Returns (phi, v(empty), v(full)).
    """
    if s < 1:
        raise ValidationError("at least one region required")
    if s > EXACT_MODE_MAX_REGIONS:
        raise ValidationError(
            f"exact mode enumerates 2^s coalitions and is capped at s={EXACT_MODE_MAX_REGIONS}; got s={s}"
        )
    members = np.arange(2**s, dtype=np.int64)
    bits = ((members[:, None] >> np.arange(s)) & 1).astype(np.float64)
    values = np.asarray(value(bits), dtype=np.float64)
    sizes = bits.sum(axis=1).astype(np.int64)
    fact = [math.factorial(i) for i in range(s + 1)]
    size_weight = np.array([fact[k] * fact[s - k - 1] / fact[s] for k in range(s)])
    phi = np.empty(s)
    for n in range(s):
        without = members[(members >> n) & 1 == 0]
        with_n = without | (1 << n)
        phi[n] = np.sum(size_weight[sizes[without]] * (values[with_n] - values[without]))
    return phi, float(values[0]), float(values[-1])


def shapley_kernel_weights(s: int, sizes: np.ndarray) -> np.ndarray:
    """Per-coalition Shapley kernel pi(z) = (s-1) / (C(s,|z|) |z| (s-|z|))."""
    sizes = np.asarray(sizes)
    if np.any((sizes <= 0) | (sizes >= s)):
        raise ValidationError("Shapley kernel is defined for coalition sizes 1..s-1")
    comb = np.array([math.comb(s, int(k)) for k in sizes], dtype=np.float64)
    return (s - 1) / (comb * sizes * (s - sizes))


def sample_shapley_coalitions(s: int, nsamples: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Coalitions plus kernel weights: complete subset sizes while the budget
    allows, then seeded random draws with duplicate-weight accumulation."""
    num_subset_sizes = int(np.ceil((s - 1) / 2))
    num_paired = int(np.floor((s - 1) / 2))
    size_weights = np.array([(s - 1.0) / (k * (s - k)) for k in range(1, num_subset_sizes + 1)])
    size_weights[:num_paired] *= 2
    size_weights /= size_weights.sum()

    rows: list[np.ndarray] = []
    kernel: list[float] = []
    remaining = size_weights.copy()
    samples_left = nsamples
    num_full = 0
    for size in range(1, num_subset_sizes + 1):
        nsubsets = math.comb(s, size) * (2 if size <= num_paired else 1)
        if samples_left * remaining[size - 1] / nsubsets < 1.0 - 1e-8:
            break
        num_full += 1
        samples_left -= nsubsets
        if remaining[size - 1] < 1.0:
            remaining /= 1.0 - remaining[size - 1]
        w = size_weights[size - 1] / math.comb(s, size)
        if size <= num_paired:
            w /= 2.0
        for inds in combinations(range(s), size):
            z = np.zeros(s)
            z[list(inds)] = 1.0
            rows.append(z)
            kernel.append(w)
            if size <= num_paired:
                rows.append(1.0 - z)
                kernel.append(w)

    n_fixed = len(rows)
    if num_full < num_subset_sizes and samples_left > 0:
        rest = size_weights.copy()
        rest[:num_paired] /= 2.0
        rest = rest[num_full:]
        rest /= rest.sum()
        draws = rng.choice(len(rest), size=4 * samples_left + 8, p=rest)
        used: dict[tuple, int] = {}
        pos = 0
        while samples_left > 0 and pos < len(draws):
            size = int(draws[pos]) + num_full + 1
            pos += 1
            z = np.zeros(s)
            z[rng.permutation(s)[:size]] = 1.0
            key = tuple(z.astype(bool))
            if key not in used:
                used[key] = len(rows)
                rows.append(z)
                kernel.append(1.0)
                samples_left -= 1
                fresh = True
            else:
                kernel[used[key]] += 1.0
                fresh = False
            if samples_left > 0 and size <= num_paired:
                comp = 1.0 - z
                ckey = tuple(comp.astype(bool))
                if fresh:
                    used[ckey] = len(rows)
                    rows.append(comp)
                    kernel.append(1.0)
                    samples_left -= 1
                else:
                    kernel[used[ckey]] += 1.0
        weight_left = size_weights[num_full:].sum()
        tail = np.array(kernel[n_fixed:])
        if tail.size:
            tail *= weight_left / tail.sum()
            kernel[n_fixed:] = tail.tolist()
    return np.array(rows), np.array(kernel)


def shapley_kernel_solve(
    presence: np.ndarray, y: np.ndarray, weights: np.ndarray, v_empty: float, v_full: float
) -> np.ndarray:
    """Kernel-weighted least squares with both efficiency constraints.

    The intercept is pinned to v(empty) and the coefficient sum to
    v(full) - v(empty) by eliminating the last region's coefficient.
    """
    s = presence.shape[1]
    total = v_full - v_empty
    y_adj = y - v_empty - presence[:, -1] * total
    design = presence[:, :-1] - presence[:, [-1]]
    sw = np.sqrt(weights)
    beta, _, _, _ = np.linalg.lstsq(design * sw[:, None], y_adj * sw, rcond=None)
    phi = np.empty(s)
    phi[:-1] = beta
    phi[-1] = total - beta.sum()
    return phi


def kernelshap_attribution(
    embedder: Embedder,
    image: np.ndarray,
    masks: RegionMaskStack,
    fill: FillStrategy,
    *,
    mode: str = "auto",
    samples: int = 2048,
    seed: int = 0,
    value_fn: str = "single",
    reference_pair: np.ndarray | None = None,
    reference_masks: RegionMaskStack | None = None,
    norm: int = 1,
    image_id: str | None = None,
    batch_size: int = 2048,
) -> Attribution:
    """Shapley values of the semantic regions.

    ``value_fn='single'`` scores coalitions by the norm of the occluded
    image's embedding; ``value_fn='pair'`` scores them by the cosine
    similarity of the pair with the same regions occluded in both images.
    """
    s = masks.size
    if s < 2:
        raise ValidationError("KernelSHAP needs at least 2 regions")
    if mode not in ("auto", "exact", "sampled"):
        raise ValidationError(f"mode must be auto|exact|sampled, got '{mode}'")
    if value_fn not in ("single", "pair"):
        raise ValidationError(f"value_fn must be single|pair, got '{value_fn}'")
    if value_fn == "pair":
        if reference_pair is None or reference_masks is None:
            raise ValidationError("pair value function needs reference_pair and reference_masks")
        pair = (reference_pair, reference_masks)
    else:
        pair = None
    value = presence_value_function(embedder, image, masks, fill, norm=norm, pair=pair, batch_size=batch_size)

    resolved = mode
    if mode == "auto":
        resolved = "exact" if s <= EXACT_MODE_MAX_REGIONS else "sampled"
    meta = {
        "mode": resolved,
        "seed": seed,
        "value_fn": value_fn,
        "fill": fill.label,
        "norm": norm,
    }
    if resolved == "exact":
        phi, v_empty, v_full = shapley_exact_values(value, s)
        meta["coalitions"] = 2**s
    else:
        rng = np.random.default_rng(seed)
        presence, kernel = sample_shapley_coalitions(s, samples, rng)
        boundary = value(np.vstack([np.zeros(s), np.ones(s)]))
        v_empty, v_full = float(boundary[0]), float(boundary[1])
        y = value(presence)
        phi = shapley_kernel_solve(presence, y, kernel, v_empty, v_full)
        meta["coalitions"] = int(presence.shape[0])
        meta["samples"] = samples
    meta["v_empty"] = v_empty
    meta["v_full"] = v_full
    return Attribution(
        image_id=image_id or masks.image_id,
        method=METHOD_KERNELSHAP,
        set_id=masks.set_id,
        scores=phi,
        metadata=meta,
    )
