"""Preprocessing pipeline and the on-disk store it produces.

Store layout::

    <store>/
      meta.json            format version, ontology hash, counts, checksums
      edges.jsonl          one hyperedge per line
      vectors.bin          key-index rows then value-index rows (float32 LE)
      vectors.idx.json     row -> (edge id, node ordinal, kind)
      chunks.jsonl         the chunks that were mapped (for attribution and the baseline)
      cache/mapping.jsonl  raw mapping-model answers
      cache/embeddings.jsonl
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ontorag.blocks import DocumentChunk, chunk_documents
from ontorag.embedding import (
    CachedProvider,
    EmbeddingCache,
    EmbeddingProvider,
    IndexKind,
    NodeIndex,
    load_indexes,
    save_indexes,
)
from ontorag.hypergraph import Hypergraph, StoreFormatError, build_hypergraph, load_hypergraph, read_meta, save_hypergraph
from ontorag.llm import LanguageModelClient
from ontorag.mapping import MappingCache, MappingReport, map_chunks
from ontorag.ontology import Ontology

log = logging.getLogger("ontorag.store")

CHUNKS_FILE = "chunks.jsonl"
MAPPING_CACHE = "cache/mapping.jsonl"
EMBEDDING_CACHE = "cache/embeddings.jsonl"
DEFAULT_CHUNK_BUDGET = 12_000


@dataclass
class Store:
    path: Path
    hypergraph: Hypergraph
    key_index: NodeIndex
    value_index: NodeIndex
    provider: EmbeddingProvider
    meta: dict = field(default_factory=dict)
    chunks: list[DocumentChunk] = field(default_factory=list)

    def chunk(self, doc_id: str, chunk_index: int) -> DocumentChunk | None:
        for c in self.chunks:
            if c.doc_id == doc_id and c.chunk_index == chunk_index:
                return c
        return None


def load_documents(path: str | Path) -> list[tuple[str, str]]:
    """Read documents from a directory of ``.txt``/``.md`` files, one text file, or a JSONL file.

    JSONL rows carry ``doc_id`` and ``text``. Directory documents are keyed by
    their path relative to the directory and returned sorted.
    """
    p = Path(path)
    if p.is_dir():
        files = sorted(f for f in p.rglob("*") if f.is_file() and f.suffix.lower() in {".txt", ".md"})
        return [(f.relative_to(p).as_posix(), f.read_text(encoding="utf-8")) for f in files]
    if p.suffix.lower() == ".jsonl":
        docs = []
        for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
            if line.strip():
                row = json.loads(line)
                if "doc_id" not in row or "text" not in row:
                    raise ValueError(f"{p}:{lineno}: rows need 'doc_id' and 'text'")
                docs.append((str(row["doc_id"]), row["text"]))
        return docs
    if p.is_file():
        return [(p.name, p.read_text(encoding="utf-8"))]
    raise FileNotFoundError(f"no documents at {p}")


def _write_chunks(path: Path, chunks: list[DocumentChunk]) -> None:
    lines = [
        json.dumps(
            {"doc_id": c.doc_id, "chunk_index": c.chunk_index, "char_span": list(c.char_span), "text": c.text},
            ensure_ascii=False,
        )
        + "\n"
        for c in chunks
    ]
    path.write_text("".join(lines), encoding="utf-8", newline="\n")


def _read_chunks(path: Path) -> list[DocumentChunk]:
    if not path.exists():
        return []
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            r = json.loads(line)
            out.append(DocumentChunk(r["doc_id"], r["chunk_index"], r["text"], tuple(r["char_span"])))
    return out


@dataclass
class PreprocessResult:
    store: Store
    mapping: MappingReport


def preprocess(
    ontology: Ontology,
    docs: list[tuple[str, str]],
    client: LanguageModelClient,
    provider: EmbeddingProvider,
    store_path: str | Path,
    chunk_budget: int = DEFAULT_CHUNK_BUDGET,
    dedupe_subset_edges: bool = True,
    context_definition: str | None = None,
    concurrency: int = 4,
) -> PreprocessResult:
    """Map documents, build the hypergraph and both node indexes, write the store.

    Reruns reuse the mapping and embedding caches in the store directory.
    """
    root = Path(store_path)
    root.mkdir(parents=True, exist_ok=True)
    chunks = chunk_documents(docs, chunk_budget)
    mapping_cache = MappingCache(root / MAPPING_CACHE)
    report = map_chunks(client, ontology, chunks, context_definition, mapping_cache, concurrency)
    mapping_cache.save()

    h = build_hypergraph(report.blocks, dedupe_subset_edges)
    embedding_cache = EmbeddingCache(root / EMBEDDING_CACHE)
    cached = CachedProvider(provider, embedding_cache)
    key_index = NodeIndex.build(h, cached, IndexKind.KEY)
    value_index = NodeIndex.build(h, cached, IndexKind.VALUE)
    embedding_cache.save()

    meta = {
        "provider_id": provider.provider_id,
        "dim": key_index.dim,
        "mapping_model": getattr(client, "model", "unknown"),
        "chunk_budget": chunk_budget,
        "dedupe_subset_edges": dedupe_subset_edges,
        "mapping": {
            "chunks": len(chunks),
            "blocks": len(report.blocks),
            "failed_chunks": len(report.failed_chunks),
            "warnings": len(report.warnings),
        },
    }
    save_hypergraph(h, root, ontology.fingerprint(), meta)
    save_indexes(root, h, key_index, value_index, provider.provider_id)
    _write_chunks(root / CHUNKS_FILE, chunks)
    log.info(
        "store written", extra={"event": "preprocess_done", "edges": len(h.edges), "nodes": len(h.nodes)}
    )
    store = Store(root, h, key_index, value_index, provider, read_meta(root), chunks)
    return PreprocessResult(store, report)


def open_store(path: str | Path, provider: EmbeddingProvider) -> Store:
    root = Path(path)
    meta = read_meta(root)
    h = load_hypergraph(root)
    key_index, value_index, provider_id = load_indexes(root, h)
    if provider_id != provider.provider_id:
        raise StoreFormatError(
            f"store was embedded with {provider_id!r} but the query provider is {provider.provider_id!r}"
        )
    return Store(root, h, key_index, value_index, provider, meta, _read_chunks(root / CHUNKS_FILE))
