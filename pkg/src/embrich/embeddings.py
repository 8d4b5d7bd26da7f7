"""Embedding backends, batch-wise corpus embedding, and the persistent cache.

Two backends exist: a fully offline deterministic hash embedder (the
default, needs no network or model weights) and a client for the remote
embedding service. Both are stateless; caching happens in embed_corpus.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    CacheCorrupt,
    ConfigError,
    DimensionMismatch,
    RemoteModelUnknown,
    ServiceUnavailable,
)
from .textualize import TextCorpus

log = logging.getLogger(__name__)

HASH_BACKEND = "deterministic_hash"
REMOTE_BACKEND = "remote_service"

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class EmbeddingBackendDescriptor:
    kind: str  # "deterministic_hash" | "remote_service"
    model_id: str
    dim: int
    endpoint: str | None = None
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (HASH_BACKEND, REMOTE_BACKEND):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.dim <= 0:
            raise ConfigError(f"dim must be positive, got {self.dim}")
        if self.batch_size <= 0:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if (self.endpoint is None) == (self.kind == REMOTE_BACKEND):
            raise ConfigError("endpoint is required exactly when kind is remote_service")


@dataclass(frozen=True)
class EmbeddingMatrix:
    backend: EmbeddingBackendDescriptor
    values: np.ndarray  # n x dim
    corpus_fingerprint: str


def _token_hash(token: str) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def hash_embed_text(text: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic stand-in embedding: mean of per-token pseudorandom vectors.

    Tokens are lowercased maximal alphanumeric runs. Each token seeds a
    Philox counter-based generator with (seed, 64-bit token hash) and draws
    a standard-normal vector, so any two runs agree bit for bit.
    """
    if dim <= 0:
        raise ConfigError(f"dim must be positive, got {dim}")
    tokens = _TOKEN_RE.findall(text.lower())
    total = np.zeros(dim, dtype=np.float64)
    seed_u64 = seed & 0xFFFFFFFFFFFFFFFF
    for token in tokens:
        key = np.array([seed_u64, _token_hash(token)], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        total += gen.standard_normal(dim)
    return total / max(1, len(tokens))


def corpus_fingerprint(corpus: TextCorpus) -> str:
    h = hashlib.sha256()
    h.update(corpus.template_version.encode("utf-8"))
    for text in corpus.texts:
        h.update(b"\x00")
        h.update(text.encode("utf-8"))
    return h.hexdigest()


def cache_key(model_id: str, template_version: str, text: str) -> str:
    text_hash = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return f"{model_id}/{template_version}/{text_hash}"


class EmbeddingCache:
    """Append-only content-addressed vector store backed by a JSON-Lines file.

    A key maps to exactly one vector forever; concurrent writers of the same
    key are harmless because values are deterministic per key. path=None
    keeps the cache in memory only.
    """

    def __init__(self, path: str | None = None):
        self.path = path
        self._lock = threading.Lock()
        self._entries: dict[str, np.ndarray] = {}
        if path is not None:
            self._load()

    def _load(self) -> None:
        try:
            fh = open(self.path, encoding="utf-8")
        except FileNotFoundError:
            return
        with fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                    key, vec = entry["k"], entry["v"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise CacheCorrupt(f"{self.path}:{line_no}: {exc}") from None
                self._entries[key] = np.asarray(vec, dtype=np.float64)

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> np.ndarray | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float64)
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = vector
            if self.path is not None:
                line = json.dumps({"k": key, "v": vector.tolist()}) + "\n"
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line)


def cache_get_or_compute(cache: EmbeddingCache, key: str, compute) -> np.ndarray:
    """Return the cached vector for key, computing and persisting on a miss."""
    found = cache.get(key)
    if found is not None:
        return found
    vector = np.asarray(compute(), dtype=np.float64)
    cache.put(key, vector)
    return vector


class HashEmbeddingBackend:
    def __init__(self, descriptor: EmbeddingBackendDescriptor):
        if descriptor.kind != HASH_BACKEND:
            raise ConfigError("descriptor kind must be deterministic_hash")
        self.descriptor = descriptor

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        d = self.descriptor
        return np.stack([hash_embed_text(t, d.dim, d.seed) for t in texts])


def remote_embed_batch(
    descriptor: EmbeddingBackendDescriptor,
    texts: list[str],
    *,
    attempts: int = 3,
    backoff: float = 0.25,
    session=None,
) -> np.ndarray:
    """POST one batch to the embedding service, with bounded retries.

    Connection failures and 5xx responses back off exponentially starting at
    `backoff` seconds; a 404 means the model id is unknown and is not retried.
    """
    import requests

    if descriptor.kind != REMOTE_BACKEND:
        raise ConfigError("remote_embed_batch needs a remote_service descriptor")
    if not texts:
        raise ConfigError("texts must be non-empty")
    if len(texts) > descriptor.batch_size:
        raise ConfigError(f"{len(texts)} texts exceed batch_size {descriptor.batch_size}")

    url = descriptor.endpoint.rstrip("/")
    if not url.endswith("/v1/embed"):
        url += "/v1/embed"
    payload = {"model": descriptor.model_id, "texts": list(texts)}
    http = session if session is not None else requests

    last_error: Exception | None = None
    for attempt in range(attempts):
        if attempt:
            time.sleep(backoff * (2 ** (attempt - 1)))
        try:
            response = http.post(url, json=payload, timeout=60)
        except requests.RequestException as exc:
            last_error = exc
            continue
        if response.status_code == 404:
            raise RemoteModelUnknown(f"service has no model {descriptor.model_id!r}")
        if response.status_code >= 500:
            last_error = ServiceUnavailable(f"HTTP {response.status_code}")
            continue
        if response.status_code != 200:
            raise ServiceUnavailable(f"HTTP {response.status_code}: {response.text[:200]}")
        body = response.json()
        vectors = np.asarray(body["embeddings"], dtype=np.float64)
        if vectors.shape != (len(texts), descriptor.dim):
            raise DimensionMismatch(
                f"service returned shape {vectors.shape}, expected ({len(texts)}, {descriptor.dim})"
            )
        return vectors
    raise ServiceUnavailable(f"no response after {attempts} attempts: {last_error}")


class RemoteEmbeddingBackend:
    def __init__(self, descriptor: EmbeddingBackendDescriptor, session=None):
        if descriptor.kind != REMOTE_BACKEND:
            raise ConfigError("descriptor kind must be remote_service")
        self.descriptor = descriptor
        self._session = session

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        return remote_embed_batch(self.descriptor, texts, session=self._session)


def make_backend(descriptor: EmbeddingBackendDescriptor):
    if descriptor.kind == HASH_BACKEND:
        return HashEmbeddingBackend(descriptor)
    return RemoteEmbeddingBackend(descriptor)


def embed_corpus(backend, corpus: TextCorpus, cache: EmbeddingCache | None = None) -> EmbeddingMatrix:
    """Embed every corpus text, batch-wise, consulting the cache first.

    Only cache-cold unique texts reach the backend; batches never exceed the
    descriptor's batch_size and run sequentially to bound memory. Row i of
    the result always corresponds to corpus text i.
    """
    if not corpus.texts:
        raise ConfigError("corpus is empty")
    descriptor = backend.descriptor
    if cache is None:
        cache = EmbeddingCache(path=None)

    keys = [cache_key(descriptor.model_id, corpus.template_version, t) for t in corpus.texts]
    cold: list[str] = []
    cold_keys: list[str] = []
    seen: set[str] = set()
    for text, key in zip(corpus.texts, keys):
        if key in seen or cache.get(key) is not None:
            continue
        seen.add(key)
        cold.append(text)
        cold_keys.append(key)

    for start in range(0, len(cold), descriptor.batch_size):
        batch = cold[start : start + descriptor.batch_size]
        batch_keys = cold_keys[start : start + descriptor.batch_size]
        vectors = backend.embed_batch(batch)
        if vectors.shape != (len(batch), descriptor.dim):
            raise DimensionMismatch(
                f"backend returned shape {vectors.shape}, expected ({len(batch)}, {descriptor.dim})"
            )
        for key, vec in zip(batch_keys, vectors):
            cache.put(key, vec)

    rows = np.stack([cache.get(key) for key in keys])
    if not np.isfinite(rows).all():
        raise ConfigError("backend produced non-finite embedding values")
    return EmbeddingMatrix(
        backend=descriptor, values=rows, corpus_fingerprint=corpus_fingerprint(corpus)
    )
