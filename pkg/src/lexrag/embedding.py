"""Dense text embeddings and the similarity primitives used everywhere else.

Vectors are 1-d float64 numpy arrays. The reference embedder is a seeded
character-n-gram hasher: deterministic, dependency-free, and adequate for
exercising the retrieval and routing machinery without a neural model.
External neural embedders plug in behind the same protocol.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import BackendError, DimensionMismatchError, NormalizationError, ValidationError

Vector = np.ndarray


def as_vector(values) -> Vector:
    """Validate and coerce a sequence of reals into a finite 1-d float64 vector."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValidationError(f"vector must be 1-d and nonempty, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("vector contains non-finite values")
    return v


def cosine(a: Vector, b: Vector) -> float:
    """Cosine similarity (a.b)/(|a||b|); any zero-norm operand scores 0.0.

    The zero convention lets empty documents rank last inside retrieval
    instead of aborting a whole batch.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dims differ: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def normalize(v: Vector) -> Vector:
    """Return v scaled to unit norm; zero vectors are an error."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise NormalizationError("cannot normalize a zero vector")
    return v / n


@runtime_checkable
class Embedder(Protocol):
    """Anything that maps text to a fixed-dimension vector."""

    name: str
    dim: int
    deterministic: bool

    def embed(self, text: str) -> Vector: ...


class HashEmbedder:
    """Deterministic character-n-gram hashing embedder.

    Each n-gram of the casefolded, space-padded text is hashed (keyed
    blake2b) to a bucket and a sign; the signed counts are L2-normalized.
    Empty text yields the zero vector; any nonempty text yields a unit
    vector. Referentially transparent by construction.
    """

    deterministic = True

    def __init__(self, dim: int = 256, ngram: int = 3, seed: int = 13):
        if dim <= 0:
            raise ValidationError(f"dim must be positive, got {dim}")
        if ngram <= 0:
            raise ValidationError(f"ngram must be positive, got {ngram}")
        self.dim = dim
        self.ngram = ngram
        self.seed = seed
        self.name = f"hash-{dim}"
        self._key = seed.to_bytes(8, "little", signed=True)

    def embed(self, text: str) -> Vector:
        vec = np.zeros(self.dim, dtype=np.float64)
        if text == "":
            return vec
        padded = f" {text.casefold()} "
        n = self.ngram
        for i in range(max(len(padded) - n + 1, 0)):
            gram = padded[i : i + n]
            digest = hashlib.blake2b(gram.encode("utf-8"), key=self._key, digest_size=8).digest()
            h = int.from_bytes(digest, "little")
            bucket = h % self.dim
            sign = 1.0 if (h >> 63) & 1 else -1.0
            vec[bucket] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # Signed counts can cancel only through hash collisions; fall back
            # to a single deterministic bucket so nonempty text stays nonzero.
            digest = hashlib.blake2b(padded.encode("utf-8"), key=self._key, digest_size=8).digest()
            vec[int.from_bytes(digest, "little") % self.dim] = 1.0
            return vec
        return vec / norm


class HttpEmbedder:
    """Adapter slot for an external embedding service (e.g. a hosted
    legal-domain encoder).

    POSTs {"text": ...} and expects {"vector": [...]} of the declared
    dimension back. Transport failures and timeouts raise backend errors;
    there is never a partial or fallback vector.
    """

    deterministic = False

    def __init__(self, endpoint: str, dim: int, timeout: float = 10.0, client=None):
        if dim <= 0:
            raise ValidationError(f"dim must be positive, got {dim}")
        self.endpoint = endpoint
        self.dim = dim
        self.timeout = timeout
        self.name = f"external:{endpoint}"
        self._client = client

    def embed(self, text: str) -> Vector:
        import httpx

        try:
            if self._client is not None:
                response = self._client.post(self.endpoint, json={"text": text}, timeout=self.timeout)
            else:
                response = httpx.post(self.endpoint, json={"text": text}, timeout=self.timeout)
            response.raise_for_status()
            body = response.json()
        except Exception as exc:  # noqa: BLE001 - any transport failure is a backend error
            raise BackendError(f"embedding backend unreachable: {exc}") from exc
        vector = np.asarray(body.get("vector", ()), dtype=np.float64)
        if vector.shape != (self.dim,):
            raise DimensionMismatchError(
                f"embedding backend returned shape {vector.shape}, declared dim {self.dim}"
            )
        if not np.all(np.isfinite(vector)):
            raise BackendError("embedding backend returned non-finite values")
        return vector


def embed(text: str, embedder: Embedder) -> Vector:
    """Embed text and enforce the declared output dimension."""
    v = np.asarray(embedder.embed(text), dtype=np.float64)
    if v.shape != (embedder.dim,):
        raise DimensionMismatchError(
            f"embedder {embedder.name} returned shape {v.shape}, declared dim {embedder.dim}"
        )
    return v
