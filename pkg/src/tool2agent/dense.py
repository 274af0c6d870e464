"""Embedding providers, the on-disk embedding cache, and exact cosine search."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import requests

from .catalog import CatalogEntity, Kind
from .errors import (
    CredentialMissing,
    DimensionMismatch,
    EmptyCorpus,
    IndexFormatError,
    ProviderError,
)
from .lexical import corpus_id, tokenize
from .ranking import RankedList, ScoredEntity

logger = logging.getLogger(__name__)

DENSE_FORMAT = "tool2agent.dense"
DENSE_FORMAT_VERSION = 1

_NORM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    is_zero: bool = False

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def normalized(cls, raw) -> "EmbeddingVector":
        """Unit-normalize ``raw``. An all-zero input stays zero and is flagged."""
        v = np.array(raw, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("embedding must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("embedding contains non-finite values")
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            v.setflags(write=False)
            return cls(v, True)
        v = v / norm
        v.setflags(write=False)
        return cls(v, False)

    def equals(self, other: "EmbeddingVector") -> bool:
        return self.is_zero == other.is_zero and np.array_equal(self.values, other.values)


class ProviderKind(str, enum.Enum):
    HTTP_API = "http_api"
    DETERMINISTIC_HASH = "deterministic_hash"


@dataclass(frozen=True)
class EmbeddingProviderSpec:
    provider_kind: ProviderKind
    model_name: str
    dimension: int
    batch_size: int = 64
    endpoint: Optional[str] = None
    credential_env_var: Optional[str] = None
    seed: int = 0
    max_in_flight: int = 4
    # request/response shape of the embedding API
    model_field: str = "model"
    input_field: str = "input"
    data_field: str = "data"
    embedding_field: str = "embedding"
    auth_header: str = "Authorization"
    auth_scheme: str = "Bearer"
    extra_body: dict = field(default_factory=dict, hash=False)
    timeout: float = 30.0
    max_attempts: int = 3
    backoff_seconds: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "provider_kind", ProviderKind(self.provider_kind))
        if self.dimension <= 0:
            raise ValueError(f"dimension must be positive, got {self.dimension}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_in_flight < 1:
            raise ValueError(f"max_in_flight must be >= 1, got {self.max_in_flight}")
        if self.provider_kind is ProviderKind.HTTP_API:
            if not self.endpoint:
                raise ValueError(f"http_api provider {self.model_name!r} needs an endpoint")
            if not self.credential_env_var:
                raise ValueError(f"http_api provider {self.model_name!r} needs credential_env_var")
        elif self.dimension < 8:
            raise ValueError("deterministic_hash dimension must be >= 8")

    @property
    def fingerprint(self) -> str:
        if self.provider_kind is ProviderKind.DETERMINISTIC_HASH:
            return f"{self.model_name}:{self.dimension}:seed={self.seed}"
        return f"{self.model_name}:{self.dimension}"

    @classmethod
    def from_dict(cls, data: dict) -> "EmbeddingProviderSpec":
        data = dict(data)
        if "kind" in data:
            data["provider_kind"] = data.pop("kind")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown provider keys: {sorted(unknown)}")
        return cls(**data)


def hash_embed(text: str, dimension: int, seed: int = 0) -> EmbeddingVector:
    """Signed feature-hashing embedding of the token multiset of ``text``."""
    if dimension < 8:
        raise ValueError("dimension must be >= 8")
    v = np.zeros(dimension, dtype=np.float64)
    key = seed.to_bytes(8, "little", signed=True)
    for token in tokenize(text):
        h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest(), "little")
        sign = 1.0 if (h >> 63) & 1 else -1.0
        v[h % dimension] += sign
    return EmbeddingVector.normalized(v)


class EmbeddingCache:
    """Content-addressed store: one ``.npy`` file per (provider fingerprint, text).

    Reads are served from memory after first touch. Writes go through a lock
    and land atomically, so a crash never leaves a half-written entry.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else None
        self._memory: dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()

    @staticmethod
    def key(fingerprint: str, text: str) -> str:
        return hashlib.sha256(f"{fingerprint}\n{text}".encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.npy"

    def get(self, fingerprint: str, text: str) -> Optional[EmbeddingVector]:
        key = self.key(fingerprint, text)
        with self._lock:
            hit = self._memory.get(key)
        if hit is not None or self.directory is None:
            return hit
        path = self._path(key)
        if not path.exists():
            return None
        try:
            values = np.load(path, allow_pickle=False)
        except (OSError, ValueError):
            logger.warning("ignoring unreadable cache entry %s", path)
            return None
        # stored vectors are already normalized; renormalizing could perturb the last bit
        values.setflags(write=False)
        vec = EmbeddingVector(values, not values.any())
        with self._lock:
            self._memory[key] = vec
        return vec

    def put(self, fingerprint: str, text: str, vec: EmbeddingVector) -> None:
        key = self.key(fingerprint, text)
        with self._lock:
            self._memory[key] = vec
            if self.directory is None:
                return
            path = self._path(key)
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            try:
                with os.fdopen(fd, "wb") as fh:
                    np.save(fh, np.asarray(vec.values), allow_pickle=False)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


class Embedder:
    """Embeds texts through one provider, consulting the cache first.

    ``requests`` counts provider calls (HTTP requests, or hash batches for the
    offline provider); a fully warm cache leaves it untouched.
    """

    def __init__(self, spec: EmbeddingProviderSpec, cache: EmbeddingCache | None = None, session=None):
        self.spec = spec
        self.cache = cache if cache is not None else EmbeddingCache()
        self.requests = 0
        self._counter_lock = threading.Lock()
        self._http = session if session is not None else requests

    @property
    def fingerprint(self) -> str:
        return self.spec.fingerprint

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        texts = list(texts)
        if not texts:
            raise ValueError("embed_batch needs at least one text")
        fp = self.spec.fingerprint
        found: dict[str, EmbeddingVector] = {}
        missing: list[str] = []
        pending: set[str] = set()
        for t in texts:
            if t in found or t in pending:
                continue
            hit = self.cache.get(fp, t)
            if hit is None:
                missing.append(t)
                pending.add(t)
            else:
                found[t] = hit

        if missing:
            if self.spec.provider_kind is ProviderKind.HTTP_API:
                credential = os.environ.get(self.spec.credential_env_var or "")
                if not credential:
                    raise CredentialMissing(self.spec.credential_env_var)
            else:
                credential = None
            batches = [missing[i:i + self.spec.batch_size] for i in range(0, len(missing), self.spec.batch_size)]
            if len(batches) == 1 or self.spec.max_in_flight == 1:
                results = [self._fetch(b, credential) for b in batches]
            else:
                with ThreadPoolExecutor(max_workers=self.spec.max_in_flight) as pool:
                    results = list(pool.map(lambda b: self._fetch(b, credential), batches))
            # single writer: cache updates happen here, in submission order
            for batch, vectors in zip(batches, results):
                for t, v in zip(batch, vectors):
                    self.cache.put(fp, t, v)
                    found[t] = v
        return [found[t] for t in texts]

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text])[0]

    def _fetch(self, batch: list[str], credential: str | None) -> list[EmbeddingVector]:
        with self._counter_lock:
            self.requests += 1
        if self.spec.provider_kind is ProviderKind.DETERMINISTIC_HASH:
            return [hash_embed(t, self.spec.dimension, self.spec.seed) for t in batch]
        raw = self._post_with_retries(batch, credential)
        out = []
        for values in raw:
            if len(values) != self.spec.dimension:
                raise DimensionMismatch(self.spec.dimension, len(values))
            out.append(EmbeddingVector.normalized(values))
        return out

    def _post_with_retries(self, batch: list[str], credential: str) -> list[list[float]]:
        spec = self.spec
        body = {spec.model_field: spec.model_name, spec.input_field: batch, **spec.extra_body}
        headers = {spec.auth_header: f"{spec.auth_scheme} {credential}".strip()}
        status = None
        for attempt in range(spec.max_attempts):
            if attempt:
                delay = spec.backoff_seconds * (2 ** (attempt - 1))
                logger.warning(
                    "retrying %s (attempt %d/%d, last status %s) in %.2fs",
                    spec.endpoint, attempt + 1, spec.max_attempts, status, delay,
                )
                time.sleep(delay)
            try:
                resp = self._http.post(spec.endpoint, json=body, headers=headers, timeout=spec.timeout)
            except requests.RequestException as exc:
                status = None
                logger.warning("request to %s failed: %s", spec.endpoint, exc)
                continue
            status = resp.status_code
            if status == 429 or status >= 500:
                continue
            if status >= 400:
                raise ProviderError(f"{spec.endpoint} rejected the request", status, attempt)
            try:
                return _extract_embeddings(resp.json(), spec, len(batch))
            except (ValueError, KeyError, TypeError) as exc:
                raise ProviderError(f"malformed response from {spec.endpoint}: {exc}", status, attempt) from exc
        raise ProviderError(f"{spec.endpoint} failed after {spec.max_attempts} attempts", status, spec.max_attempts - 1)


def _extract_embeddings(payload, spec: EmbeddingProviderSpec, expected: int) -> list[list[float]]:
    data = payload[spec.data_field]
    if len(data) != expected:
        raise ValueError(f"expected {expected} embeddings, got {len(data)}")
    if all(isinstance(d, dict) and "index" in d for d in data):
        data = sorted(data, key=lambda d: d["index"])
    return [list(d[spec.embedding_field]) for d in data]


def embed_batch(provider: EmbeddingProviderSpec, texts: Sequence[str], cache: EmbeddingCache | None = None):
    return Embedder(provider, cache).embed_batch(texts)


# --- index -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DenseIndex:
    entities: tuple[CatalogEntity, ...]
    vectors: np.ndarray  # (n, dimension), unit rows or flagged zero rows
    provider_fingerprint: str

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def corpus_id(self) -> str:
        return corpus_id(self.entities)

    def __len__(self):
        return len(self.entities)


def build_dense(entities, embedder: Embedder) -> DenseIndex:
    entities = tuple(entities)
    if not entities:
        raise EmptyCorpus("cannot build a dense index over zero entities")
    vecs = embedder.embed_batch([e.indexable_text for e in entities])
    matrix = np.vstack([v.values for v in vecs])
    if matrix.shape[1] != embedder.spec.dimension:
        raise DimensionMismatch(embedder.spec.dimension, matrix.shape[1])
    matrix.setflags(write=False)
    return DenseIndex(entities, matrix, embedder.fingerprint)


def dense_scores(index: DenseIndex, query_vector: EmbeddingVector) -> RankedList:
    """Exact cosine similarity of the query against every indexed entity."""
    if query_vector.dimension != index.dimension:
        raise DimensionMismatch(index.dimension, query_vector.dimension)
    q = np.asarray(query_vector.values)
    if not query_vector.is_zero and abs(float(np.linalg.norm(q)) - 1.0) > _NORM_TOL:
        raise ValueError("query vector must be unit-normalized")
    scores = index.vectors @ q
    order = np.lexsort((np.arange(len(scores)), -scores))
    items = [ScoredEntity.of(index.entities[i], float(scores[i]), int(i)) for i in order]
    return RankedList(items, index.corpus_id, check=False)


def save_dense(index: DenseIndex, path) -> None:
    meta = {
        "format": DENSE_FORMAT,
        "version": DENSE_FORMAT_VERSION,
        "provider_fingerprint": index.provider_fingerprint,
        "corpus_id": index.corpus_id,
        "entities": [
            {"kind": e.kind.value, "id": e.id, "text": e.indexable_text, "owner": e.owner_agent_id}
            for e in index.entities
        ],
    }
    with open(path, "wb") as fh:
        np.savez(fh, vectors=np.asarray(index.vectors), meta=np.array(json.dumps(meta)))


def load_dense(path) -> DenseIndex:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        vectors = np.array(data["vectors"], dtype=np.float64)
    if meta.get("format") != DENSE_FORMAT:
        raise IndexFormatError(f"not a dense index file (format={meta.get('format')!r})")
    if meta.get("version") != DENSE_FORMAT_VERSION:
        raise IndexFormatError(f"dense index version {meta.get('version')!r} != supported {DENSE_FORMAT_VERSION}")
    entities = tuple(CatalogEntity(Kind(e["kind"]), e["id"], e["text"], e.get("owner")) for e in meta["entities"])
    if vectors.shape[0] != len(entities):
        raise IndexFormatError("dense index row count does not match its entity list")
    vectors.setflags(write=False)
    index = DenseIndex(entities, vectors, meta["provider_fingerprint"])
    if index.corpus_id != meta.get("corpus_id"):
        raise IndexFormatError("dense index corpus fingerprint does not match its entity list")
    return index
