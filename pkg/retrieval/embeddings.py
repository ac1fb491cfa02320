"""
Embedding Providers
Text-to-vector providers behind one contract: deterministic, unit-normalized.

Features:
- MockEmbeddingProvider: seeded token-hash embeddings, no model download
- HttpEmbeddingProvider: OpenAI-style /embeddings wire contract over requests
- PrecomputedEmbeddingProvider: JSON Lines of {"key", "vector"}
- Batched embedding with a bounded thread pool
"""

import hashlib
import json
import os
from abc import ABC, abstractmethod
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Dict, List, Optional, Sequence

import numpy as np
import requests
import structlog

from config.constants import EngineConstants
from utils.exceptions import ConfigurationError, RetrievalError

logger = structlog.get_logger(__name__)

Vector = np.ndarray


class EmbeddingProvider(ABC):
    """Base interface for embedding providers."""

    batch_size = 32

    def __init__(self, dim: int, parallelism: int = 1):
        self.dim = dim
        self.parallelism = max(1, parallelism)

    @abstractmethod
    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        """Raw (not necessarily normalized) embeddings, shape (len(texts), dim)."""

    @property
    @abstractmethod
    def name(self) -> str:
        """Provider name, recorded with index exports."""

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        """Unit-normalized embeddings, chunked across the worker pool in order."""
        if not texts:
            return np.zeros((0, self.dim))
        chunks = [texts[i:i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        if self.parallelism == 1 or len(chunks) == 1:
            parts = [self.embed_batch(chunk) for chunk in chunks]
        else:
            with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                parts = list(pool.map(self.embed_batch, chunks))
        matrix = np.vstack(parts).astype(np.float64)
        if matrix.shape[1] != self.dim:
            raise ConfigurationError(
                f"Provider {self.name} returned dim {matrix.shape[1]}, expected {self.dim}",
                details={'provider': self.name}
            )
        return _normalize_rows(matrix, texts)


def _normalize_rows(matrix: np.ndarray, texts: Sequence[str]) -> np.ndarray:
    if not np.all(np.isfinite(matrix)):
        raise RetrievalError("Embedding contains non-finite values")
    norms = np.linalg.norm(matrix, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise RetrievalError("Provider returned an all-zero embedding",
                             details={'text': texts[int(zero[0])]})
    return matrix / norms[:, None]


def embed(text: str, provider: EmbeddingProvider) -> Vector:
    """Unit-normalized embedding of a single text."""
    return provider.embed_many([text])[0]


@lru_cache(maxsize=65536)
def _token_vector(token: str, seed: int, dim: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}:{token}".encode('utf-8')).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], 'big'))
    vector = rng.standard_normal(dim)
    vector.setflags(write=False)
    return vector


class MockEmbeddingProvider(EmbeddingProvider):
    """Seeded hash of the lowercased token multiset; empty text maps to e_0."""

    def __init__(self, dim: int = EngineConstants.MOCK_EMBEDDING['dim'],
                 seed: int = EngineConstants.MOCK_EMBEDDING['seed']):
        super().__init__(dim=dim, parallelism=1)
        self.seed = seed

    @property
    def name(self) -> str:
        return f"mock-{self.dim}-{self.seed}"

    def _one(self, text: str) -> np.ndarray:
        counts = Counter(text.lower().split())
        if not counts:
            null = np.zeros(self.dim)
            null[EngineConstants.MOCK_EMBEDDING['null_axis']] = 1.0
            return null
        total = np.zeros(self.dim)
        for token in sorted(counts):
            total += counts[token] * _token_vector(token, self.seed, self.dim)
        return total

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        return np.vstack([self._one(t) for t in texts]) if texts else np.zeros((0, self.dim))


class HttpEmbeddingProvider(EmbeddingProvider):
    """POST {"input": [...], "model": ...} -> {"data": [{"index", "embedding"}]}"""

    def __init__(self, endpoint: str, model: str, dim: int, api_key: Optional[str] = None,
                 timeout: float = 60.0, max_retries: int = 2, parallelism: int = 4):
        super().__init__(dim=dim, parallelism=parallelism)
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries

    @property
    def name(self) -> str:
        return f"http:{self.model}"

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        headers = {'Content-Type': 'application/json'}
        if self.api_key:
            headers['Authorization'] = f"Bearer {self.api_key}"
        payload = {'input': list(texts), 'model': self.model}

        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            try:
                response = requests.post(self.endpoint, json=payload, headers=headers,
                                         timeout=self.timeout)
                response.raise_for_status()
                data = sorted(response.json()['data'], key=lambda item: item['index'])
                return np.array([item['embedding'] for item in data], dtype=np.float64)
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
                logger.warning('embedding_request_failed', endpoint=self.endpoint,
                               attempt=attempt + 1, error=str(exc))
        raise RetrievalError(f"Embedding provider failed: {last_error}",
                             details={'endpoint': self.endpoint}, retryable=True)


class PrecomputedEmbeddingProvider(EmbeddingProvider):
    """Looks texts up in a JSON Lines file of {"key": text, "vector": [...]}"""

    def __init__(self, path: str):
        vectors: Dict[str, List[float]] = {}
        with open(path, 'r', encoding='utf-8') as handle:
            for line in handle:
                if line.strip():
                    entry = json.loads(line)
                    vectors[entry['key']] = entry['vector']
        if not vectors:
            raise ConfigurationError(f"No embeddings in {path}", details={'path': path})
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise ConfigurationError(f"Mixed embedding dimensions in {path}", details={'path': path})
        super().__init__(dim=dims.pop(), parallelism=1)
        self.path = path
        self._vectors = vectors

    @property
    def name(self) -> str:
        return f"precomputed:{os.path.basename(self.path)}"

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        missing = [t for t in texts if t not in self._vectors]
        if missing:
            raise RetrievalError(f"No precomputed embedding for '{missing[0]}'",
                                 details={'key': missing[0]})
        return np.array([self._vectors[t] for t in texts], dtype=np.float64)
