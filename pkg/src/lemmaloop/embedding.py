"""Text embedding providers and vector similarity."""

from __future__ import annotations

import hashlib
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Protocol, Sequence

import numpy as np


class EmbeddingError(Exception):
    pass


class ProviderError(EmbeddingError):
    """Transport or authentication failure talking to an embedding service."""


class DimensionMismatch(EmbeddingError, ValueError):
    pass


class ZeroVector(EmbeddingError, ValueError):
    pass


class EmbeddingProvider(Protocol):
    def embed_batch(self, texts: list[str]) -> list[list[float]]: ...


class HashEmbedder:
    """Deterministic signed bag-of-words embedder for offline runs and tests.

    Each lowercase word token is hashed (blake2b, so results do not depend on
    PYTHONHASHSEED) to a coordinate and a sign; the summed vector is
    L2-normalized.
    """

    def __init__(self, dim: int = 64):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        return [self._embed(t).tolist() for t in texts]

    def _embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token in re.findall(r"\w+", text.lower()):
            digest = int.from_bytes(hashlib.blake2b(token.encode(), digest_size=8).digest(), "big")
            vec[digest % self.dim] += 1.0 if (digest >> 32) & 1 else -1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


class HttpEmbedder:
    """OpenAI-compatible `/embeddings` client. The key is read from EMBED_API_KEY."""

    def __init__(self, endpoint: str, model: str, api_key_env: str = "EMBED_API_KEY", timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        import httpx

        key = os.environ.get(self.api_key_env)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        try:
            resp = httpx.post(
                f"{self.endpoint}/embeddings",
                json={"model": self.model, "input": texts},
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            data = resp.json()["data"]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise ProviderError(f"embedding request failed: {exc}") from exc
        data = sorted(data, key=lambda item: item.get("index", 0))
        return [item["embedding"] for item in data]


def embed(
    texts: Sequence[str],
    provider: EmbeddingProvider,
    *,
    batch_size: int = 32,
    max_in_flight: int = 4,
    retries: int = 3,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> np.ndarray:
    """Embed `texts` into an (n, dim) array, preserving input order."""
    texts = list(texts)
    if not texts:
        raise ValueError("cannot embed an empty list of texts")
    batches = [texts[i:i + batch_size] for i in range(0, len(texts), batch_size)]

    def run(batch: list[str]) -> list[list[float]]:
        for attempt in range(retries + 1):
            try:
                out = provider.embed_batch(batch)
                break
            except ProviderError:
                if attempt == retries:
                    raise
                sleep(backoff * 2 ** attempt)
        if len(out) != len(batch):
            raise DimensionMismatch(f"provider returned {len(out)} vectors for {len(batch)} texts")
        return out

    if len(batches) == 1 or max_in_flight <= 1:
        results = [run(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            results = list(pool.map(run, batches))
    rows = [row for batch in results for row in batch]
    dims = {len(r) for r in rows}
    if len(dims) != 1 or 0 in dims:
        raise DimensionMismatch(f"ragged embedding dimensions: {sorted(dims)}")
    matrix = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise EmbeddingError("provider returned non-finite values")
    return matrix


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatch(f"{u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
