"""Uniform interface to image->embedding models and cosine scoring.

Everything downstream (concept extraction, explanations, evaluation) talks
to an :class:`Embedder`.  Real models are wrapped behind
:class:`OnnxEmbedder`; synthetic oracles live in :mod:`facexplain.synthetic`.
Occlusion methods re-embed thousands of perturbed images, so a content-hash
cache (:class:`CachingEmbedder`) is provided and is safe under concurrent
use.
"""
from __future__ import annotations

import hashlib
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ActivationsUnsupportedError, DimensionMismatchError, ValidationError, ZeroNormError

__all__ = [
    "Embedding",
    "Embedder",
    "CachingEmbedder",
    "OnnxEmbedder",
    "cosine_similarity",
    "image_content_key",
]


@dataclass(frozen=True)
class Embedding:
    """A model's feature vector for one image."""

    vector: np.ndarray
    model_id: str

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise ValidationError(f"embedding must be a nonempty 1-D vector, got shape {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ValidationError(f"embedding for model '{self.model_id}' contains non-finite entries")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return self.vector.size


def cosine_similarity(a: Embedding | np.ndarray, b: Embedding | np.ndarray) -> float:
    """Exact cosine of two embeddings; symmetric, in [-1, 1].

    Identical vectors score exactly 1.0 (float rounding must not leak an
    epsilon into downstream score differences of identical pairs).
    """
    va = a.vector if isinstance(a, Embedding) else np.asarray(a, dtype=np.float64)
    vb = b.vector if isinstance(b, Embedding) else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionMismatchError(f"embedding dimensions differ: {va.shape} vs {vb.shape}")
    sa = float(np.max(np.abs(va)))
    sb = float(np.max(np.abs(vb)))
    if sa == 0.0 or sb == 0.0:
        raise ZeroNormError("cosine similarity is undefined for a zero-norm embedding")
    if np.array_equal(va, vb):
        return 1.0
    # pre-scaling by the largest component keeps squares away from under-
    # and overflow, so the result is invariant under positive rescaling
    ua = va / sa
    ub = vb / sb
    return float(np.clip(np.dot(ua, ub) / (np.linalg.norm(ua) * np.linalg.norm(ub)), -1.0, 1.0))


def image_content_key(image: np.ndarray) -> str:
    """Content hash used by the embedding cache and record/replay helpers."""
    image = np.ascontiguousarray(image)
    digest = hashlib.blake2b(digest_size=20)
    digest.update(str(image.dtype).encode())
    digest.update(str(image.shape).encode())
    digest.update(image.tobytes())
    return digest.hexdigest()


class Embedder(ABC):
    """The black-box model: deterministic image -> embedding.

    Subclasses may also expose intermediate activations (a channels x h x w
    stack) for concept-group extraction; by default that capability is
    absent and :meth:`activations` raises.
    """

    model_id: str = "embedder"

    @abstractmethod
    def embed_vector(self, image: np.ndarray) -> np.ndarray:
        """Raw embedding vector for one image."""

    def embed(self, image: np.ndarray) -> Embedding:
        return Embedding(vector=self.embed_vector(image), model_id=self.model_id)

    def embed_batch_vectors(self, images: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
        """(batch, dim) embeddings, row order matching the input order."""
        return np.stack([self.embed_vector(np.asarray(img)) for img in images])

    def embed_batch(self, images: Sequence[np.ndarray]) -> list[Embedding]:
        return [Embedding(vector=row, model_id=self.model_id) for row in self.embed_batch_vectors(images)]

    @property
    def has_activations(self) -> bool:
        return False

    def activations(self, image: np.ndarray) -> np.ndarray:
        raise ActivationsUnsupportedError(
            f"model '{self.model_id}' does not expose intermediate activations"
        )

    @property
    def activation_channels(self) -> int:
        raise ActivationsUnsupportedError(
            f"model '{self.model_id}' does not expose intermediate activations"
        )


class CachingEmbedder(Embedder):
    """Content-addressed embedding cache around another embedder.

    Keys are (model_id, image content hash); lookups and inserts are guarded
    by a lock so concurrent embed calls are safe.  Results are bit-identical
    with the cache enabled or disabled.
    """

    def __init__(self, inner: Embedder):
        self.inner = inner
        self.model_id = inner.model_id
        self._store: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _key(self, image: np.ndarray) -> str:
        return f"{self.model_id}:{image_content_key(image)}"

    def embed_vector(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image)
        key = self._key(image)
        with self._lock:
            vec = self._store.get(key)
            if vec is not None:
                self.hits += 1
                return vec
        vec = np.asarray(self.inner.embed_vector(image), dtype=np.float64)
        vec.setflags(write=False)
        with self._lock:
            self._store.setdefault(key, vec)
            self.misses += 1
        return vec

    def embed_batch_vectors(self, images) -> np.ndarray:
        images = [np.asarray(img) for img in images]
        keys = [self._key(img) for img in images]
        with self._lock:
            cached = [self._store.get(k) for k in keys]
        missing = [i for i, v in enumerate(cached) if v is None]
        if missing:
            fresh = self.inner.embed_batch_vectors([images[i] for i in missing])
            with self._lock:
                for row, i in zip(fresh, missing):
                    vec = np.asarray(row, dtype=np.float64)
                    vec.setflags(write=False)
                    self._store.setdefault(keys[i], vec)
                    cached[i] = self._store[keys[i]]
                    self.misses += 1
                self.hits += len(images) - len(missing)
        else:
            with self._lock:
                self.hits += len(images)
        return np.stack(cached)

    @property
    def has_activations(self) -> bool:
        return self.inner.has_activations

    def activations(self, image: np.ndarray) -> np.ndarray:
        return self.inner.activations(image)

    @property
    def activation_channels(self) -> int:
        return self.inner.activation_channels


class OnnxEmbedder(Embedder):
    """Adapter over a user-supplied ONNX model.

    Production face models are consumed as opaque ONNX files; nothing
    ships with this repo.  Preprocessing (per-channel mean/scale) is
    configurable because reproduced scores depend on matching the original
    training-time normalization, which the upstream publication does not
    state.
    """

    def __init__(
        self,
        model_path,
        input_name: str,
        output_name: str,
        activation_name: str | None = None,
        mean: Sequence[float] | float = 0.0,
        scale: Sequence[float] | float = 1.0,
        layout: str = "nchw",
        model_id: str | None = None,
    ):
        try:
            import onnxruntime  # noqa: F401
        except ModuleNotFoundError as exc:  # pragma: no cover - env dependent
            raise FacexplainImportError(
                "OnnxEmbedder requires the 'onnxruntime' package (pip install onnxruntime)"
            ) from exc
        import onnxruntime as ort

        if layout not in ("nchw", "nhwc"):
            raise ValidationError(f"layout must be 'nchw' or 'nhwc', got '{layout}'")
        self._session = ort.InferenceSession(str(model_path), providers=["CPUExecutionProvider"])
        self.input_name = input_name
        self.output_name = output_name
        self.activation_name = activation_name
        self.mean = np.asarray(mean, dtype=np.float32)
        self.scale = np.asarray(scale, dtype=np.float32)
        self.layout = layout
        self.model_id = model_id or f"onnx:{model_path}"
        self._lock = threading.Lock()

    def _preprocess(self, image: np.ndarray) -> np.ndarray:
        arr = np.asarray(image, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        arr = (arr - self.mean) / self.scale
        if self.layout == "nchw":
            arr = np.transpose(arr, (2, 0, 1))
        return arr[None]

    def _run(self, names: list[str], image: np.ndarray) -> list[np.ndarray]:
        batch = self._preprocess(image)
        with self._lock:  # ORT sessions are serialized; the contract is thread-safety, not speedup
            return self._session.run(names, {self.input_name: batch})

    def embed_vector(self, image: np.ndarray) -> np.ndarray:
        (out,) = self._run([self.output_name], image)
        return np.asarray(out, dtype=np.float64).reshape(-1)

    @property
    def has_activations(self) -> bool:
        return self.activation_name is not None

    def activations(self, image: np.ndarray) -> np.ndarray:
        if self.activation_name is None:
            return super().activations(image)
        (out,) = self._run([self.activation_name], image)
        stack = np.asarray(out, dtype=np.float64)
        stack = stack.reshape(stack.shape[-3:])  # drop batch dim
        return stack

    @property
    def activation_channels(self) -> int:
        if self.activation_name is None:
            return super().activation_channels
        meta = [o for o in self._session.get_outputs() if o.name == self.activation_name]
        if meta and isinstance(meta[0].shape[-3], int):
            return int(meta[0].shape[-3])
        raise ValidationError(f"cannot determine channel count of tensor '{self.activation_name}'")


class FacexplainImportError(ImportError):
    """An optional dependency needed for this feature is not installed."""
