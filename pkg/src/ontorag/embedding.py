"""Sentence-embedding providers and exact inner-product node indexes.

All vectors are L2-normalised, so the inner product used for ranking is the
cosine similarity. The empty string embeds to the zero vector.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import httpx
import numpy as np

from ontorag.hypergraph import Hypergraph, Hypernode
from ontorag.llm import post_json

VECTORS_FILE = "vectors.bin"
VECTORS_INDEX_FILE = "vectors.idx.json"
VECTORS_MAGIC = b"ORVEC\x00\x00\x01"
VECTORS_VERSION = 1

_TOKEN = re.compile(r"[^0-9a-z]+")


class EmbeddingError(ValueError):
    pass


@runtime_checkable
class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def l2_normalize(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise EmbeddingError("embedding contains non-finite values")
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    return np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN.split(text.lower()) if t]


class HashingEmbeddingProvider:
    """Offline bag-of-words embedding via the hashing trick.

    Each distinct token adds 1 to bucket ``blake2b(token) mod dim``. Using
    distinct tokens (not counts) means two texts with the same token set
    always embed identically, whatever the repetition or word order.
    """

    def __init__(self, dim: int = 256):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.provider_id = f"hash-bow-{dim}"

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            for token in set(tokenize(text)):
                out[i, self._bucket(token)] += 1.0
        return l2_normalize(out)


class RemoteEmbeddingProvider:
    """OpenAI-compatible ``/embeddings`` endpoint."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        dim: int | None = None,
        batch_size: int = 256,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.url = base_url.rstrip("/") + "/embeddings"
        self.model = model
        self.provider_id = f"remote:{model}"
        self.dim = dim or 0
        self.batch_size = batch_size
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._http = httpx.Client(timeout=timeout, transport=transport)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows: list[list[float]] = []
        pending = [t for t in texts if t]
        vectors: dict[str, list[float]] = {}
        for start in range(0, len(pending), self.batch_size):
            batch = pending[start:start + self.batch_size]
            body = post_json(
                self._http, self.url, {"model": self.model, "input": batch}, self._headers,
                self.max_attempts, self.backoff,
            )
            data = sorted(body.get("data", []), key=lambda d: d.get("index", 0))
            if len(data) != len(batch):
                raise EmbeddingError(f"expected {len(batch)} embeddings, got {len(data)}")
            for text, item in zip(batch, data):
                vectors[text] = item["embedding"]
        if vectors:
            dims = {len(v) for v in vectors.values()}
            if len(dims) != 1 or (self.dim and dims != {self.dim}):
                raise EmbeddingError(f"dimension mismatch: got {sorted(dims)}, expected {self.dim or 'consistent'}")
            self.dim = dims.pop()
        for t in texts:
            rows.append(vectors[t] if t else [0.0] * self.dim)
        return l2_normalize(np.array(rows, dtype=np.float64).reshape(len(texts), self.dim))


class EmbeddingCache:
    """Persistent ``(provider id, text hash) -> vector`` cache."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._data: dict[str, list[float]] = {}
        if self.path and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    row = json.loads(line)
                    self._data[row["key"]] = row["vector"]

    @staticmethod
    def key(provider_id: str, text: str) -> str:
        return f"{provider_id}:{hashlib.sha256(text.encode('utf-8')).hexdigest()}"

    def get(self, key: str) -> list[float] | None:
        with self._lock:
            return self._data.get(key)

    def put(self, key: str, vector: list[float]) -> None:
        with self._lock:
            self._data[key] = vector

    def __len__(self) -> int:
        return len(self._data)

    def save(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            lines = [json.dumps({"key": k, "vector": self._data[k]}) + "\n" for k in sorted(self._data)]
        self.path.write_text("".join(lines), encoding="utf-8", newline="\n")


class CachedProvider:
    """Wrap a provider so repeated texts are served from an :class:`EmbeddingCache`."""

    def __init__(self, inner: EmbeddingProvider, cache: EmbeddingCache):
        self.inner = inner
        self.cache = cache

    @property
    def provider_id(self) -> str:
        return self.inner.provider_id

    @property
    def dim(self) -> int:
        return self.inner.dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        keys = [EmbeddingCache.key(self.provider_id, t) for t in texts]
        missing = sorted({t for t, k in zip(texts, keys) if self.cache.get(k) is None})
        if missing:
            fresh = self.inner.embed(missing)
            for t, v in zip(missing, fresh):
                self.cache.put(EmbeddingCache.key(self.provider_id, t), [float(x) for x in v])
        if not texts:
            return np.zeros((0, self.dim))
        return np.array([self.cache.get(k) for k in keys], dtype=np.float64)


def embed(provider: EmbeddingProvider, texts: Sequence[str]) -> np.ndarray:
    """Embed ``texts`` in order; rows are unit length (or zero for empty text)."""
    if not texts:
        return np.zeros((0, provider.dim))
    vectors = l2_normalize(provider.embed(list(texts)))
    if vectors.shape[0] != len(texts):
        raise EmbeddingError(f"provider returned {vectors.shape[0]} vectors for {len(texts)} texts")
    return vectors


class IndexKind(str, Enum):
    KEY = "key"
    VALUE = "value"


@dataclass
class NodeIndex:
    """Exact inner-product index over hypernodes, one row per distinct node."""

    kind: IndexKind
    nodes: list[Hypernode]
    vectors: np.ndarray  # float32, shape (len(nodes), dim)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.nodes)

    @classmethod
    def build(cls, h: Hypergraph, provider: EmbeddingProvider, kind: IndexKind) -> NodeIndex:
        texts = [n.key if kind is IndexKind.KEY else n.value for n in h.nodes]
        vectors = embed(provider, texts) if texts else np.zeros((0, provider.dim))
        return cls(kind, list(h.nodes), np.ascontiguousarray(vectors, dtype=np.float32))

    def scores(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.dim:
            raise EmbeddingError(f"query dim {q.shape[0]} does not match index dim {self.dim}")
        return self.vectors.astype(np.float64) @ q


def top_k_indices(scores: np.ndarray, k: int) -> list[int]:
    """Row ids of the ``k`` best scores, descending, ties by ascending row."""
    if k <= 0:
        raise ValueError("k must be positive")
    n = scores.shape[0]
    if n == 0:
        return []
    k = min(k, n)
    if k < n:
        kth = np.partition(scores, n - k)[n - k]
        candidates = np.flatnonzero(scores >= kth)
    else:
        candidates = np.arange(n)
    order = np.lexsort((candidates, -scores[candidates]))
    return [int(i) for i in candidates[order][:k]]


def top_k(index: NodeIndex, q: np.ndarray, k: int) -> list[tuple[Hypernode, float]]:
    scores = index.scores(q)
    return [(index.nodes[i], float(scores[i])) for i in top_k_indices(scores, k)]


def save_indexes(
    path: str | Path,
    h: Hypergraph,
    key_index: NodeIndex,
    value_index: NodeIndex,
    provider_id: str,
) -> None:
    """Write ``vectors.bin`` (key rows then value rows) and ``vectors.idx.json``."""
    root = Path(path)
    if key_index.dim != value_index.dim:
        raise EmbeddingError("key and value indexes differ in dimension")
    dim = key_index.dim
    pid = provider_id.encode("utf-8")
    count = len(key_index) + len(value_index)
    header = VECTORS_MAGIC + struct.pack("<IIIH", VECTORS_VERSION, dim, count, len(pid)) + pid
    body = np.concatenate([key_index.vectors, value_index.vectors]).astype("<f4", copy=False)
    (root / VECTORS_FILE).write_bytes(header + body.tobytes(order="C"))

    rows = []
    for index in (key_index, value_index):
        for n in index.nodes:
            eid = h.edges_of(n)[0]
            rows.append([eid, h.edge(eid).nodes.index(n), index.kind.value])
    doc = {"dim": dim, "provider_id": provider_id, "rows": rows}
    (root / VECTORS_INDEX_FILE).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def load_indexes(path: str | Path, h: Hypergraph) -> tuple[NodeIndex, NodeIndex, str]:
    root = Path(path)
    raw = (root / VECTORS_FILE).read_bytes()
    if raw[:8] != VECTORS_MAGIC:
        raise EmbeddingError(f"{root / VECTORS_FILE}: bad magic")
    version, dim, count, plen = struct.unpack_from("<IIIH", raw, 8)
    if version != VECTORS_VERSION:
        raise EmbeddingError(f"{root / VECTORS_FILE}: unsupported version {version}")
    offset = 8 + struct.calcsize("<IIIH")
    provider_id = raw[offset:offset + plen].decode("utf-8")
    offset += plen
    matrix = np.frombuffer(raw, dtype="<f4", count=count * dim, offset=offset).reshape(count, dim)
    doc = json.loads((root / VECTORS_INDEX_FILE).read_text(encoding="utf-8"))
    if len(doc["rows"]) != count:
        raise EmbeddingError("vector index row count mismatch")
    grouped: dict[str, tuple[list[Hypernode], list[int]]] = {k.value: ([], []) for k in IndexKind}
    for row, (eid, ordinal, kind) in enumerate(doc["rows"]):
        nodes, ids = grouped[kind]
        nodes.append(h.edge(eid).nodes[ordinal])
        ids.append(row)
    out = []
    for kind in IndexKind:
        nodes, ids = grouped[kind.value]
        out.append(NodeIndex(kind, nodes, np.array(matrix[ids], dtype=np.float32).reshape(len(ids), dim)))
    return out[0], out[1], provider_id
