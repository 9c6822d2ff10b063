"""Offline evaluation: chunk-RAG baseline, context entity recall, exact cover oracle."""

from __future__ import annotations

import csv
import json
import re
import statistics
import time
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from ontorag.blocks import DocumentChunk
from ontorag.embedding import EmbeddingProvider, embed, top_k_indices
from ontorag.hypergraph import Hypergraph, Hypernode
from ontorag.retrieval import DEFAULT_K, DEFAULT_L, render_context, retrieve
from ontorag.store import Store

CSV_COLUMNS = ["question_id", "method", "c_erec", "context_edges", "latency_ms"]
MAX_ORACLE_EDGES = 20


class QuestionFileError(ValueError):
    pass


class CoverError(ValueError):
    pass


@dataclass(frozen=True)
class EvalQuestion:
    id: str
    query: str
    ground_truth_answer: str
    reference_entities: tuple[str, ...]


def parse_questions(doc: object) -> list[EvalQuestion]:
    if not isinstance(doc, list):
        raise QuestionFileError("question file must be a JSON array")
    out = []
    for i, q in enumerate(doc):
        if not isinstance(q, dict):
            raise QuestionFileError(f"question #{i} is not an object")
        try:
            qid, query = str(q["id"]), q["query"]
        except KeyError as exc:
            raise QuestionFileError(f"question #{i} is missing {exc.args[0]!r}") from None
        entities = q.get("reference_entities")
        if not isinstance(query, str) or not query.strip():
            raise QuestionFileError(f"question {qid}: 'query' must be non-empty text")
        if not isinstance(entities, list) or not entities or not all(isinstance(e, str) for e in entities):
            raise QuestionFileError(f"question {qid}: 'reference_entities' must be a non-empty list of strings")
        out.append(EvalQuestion(qid, query, str(q.get("ground_truth_answer", "")), tuple(entities)))
    ids = [q.id for q in out]
    if len(set(ids)) != len(ids):
        raise QuestionFileError("question ids must be unique")
    return out


def load_questions(path: str | Path) -> list[EvalQuestion]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise QuestionFileError(f"{path}: {exc}") from None
    return parse_questions(doc)


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.casefold()).strip()


def context_entity_recall(context: str, reference_entities: Sequence[str]) -> float:
    """Fraction of reference entities found in ``context``.

    Matching is a substring test after case folding and whitespace collapsing.
    """
    if not reference_entities:
        raise ValueError("reference_entities must be non-empty")
    haystack = _normalize(context)
    hits = sum(1 for e in reference_entities if _normalize(e) in haystack)
    return hits / len(reference_entities)


def brute_force_min_cover(h: Hypergraph, targets: Iterable[Hypernode]) -> tuple[int, list[int]]:
    """Smallest set of edges covering ``targets``, by exhaustive search.

    Subsets are tried in increasing size, so the first hit is optimal.
    Limited to instances with at most 20 edges touching the targets.
    """
    targets = list(dict.fromkeys(targets))
    if not targets:
        return 0, []
    index = {n: i for i, n in enumerate(targets)}
    candidates = sorted({eid for n in targets for eid in h.edges_of(n)})
    masks = {}
    for eid in candidates:
        m = 0
        for n in h.edge(eid).nodes:
            if n in index:
                m |= 1 << index[n]
        masks[eid] = m
    full = (1 << len(targets)) - 1
    reachable = 0
    for m in masks.values():
        reachable |= m
    if reachable != full:
        missing = [str(n) for n in targets if not reachable >> index[n] & 1]
        raise CoverError(f"node outside edge union: {missing[0]}")
    if len(candidates) > MAX_ORACLE_EDGES:
        raise CoverError(f"instance too large: {len(candidates)} candidate edges (limit {MAX_ORACLE_EDGES})")
    for size in range(1, len(candidates) + 1):
        for combo in combinations(candidates, size):
            m = 0
            for eid in combo:
                m |= masks[eid]
            if m == full:
                return size, list(combo)
    raise AssertionError("unreachable: union covers all targets")


class ChunkIndex:
    """Embedded document chunks for the plain chunk-retrieval baseline."""

    def __init__(self, chunks: Sequence[DocumentChunk], provider: EmbeddingProvider):
        self.chunks = list(chunks)
        self.provider = provider
        self.vectors = embed(provider, [c.text for c in self.chunks]) if self.chunks else np.zeros((0, provider.dim))

    def search(self, query: str, m: int) -> list[tuple[DocumentChunk, float]]:
        if m < 1:
            raise ValueError("m must be >= 1")
        if not self.chunks:
            return []
        q = embed(self.provider, [query])[0]
        scores = self.vectors @ q
        return [(self.chunks[i], float(scores[i])) for i in top_k_indices(scores, m)]


def baseline_chunk_retrieve(
    chunks: Sequence[DocumentChunk], query: str, m: int, provider: EmbeddingProvider
) -> list[DocumentChunk]:
    """Top-``m`` chunks by embedding similarity to ``query``."""
    return [c for c, _ in ChunkIndex(chunks, provider).search(query, m)]


class Judge(Protocol):
    """Model-graded metrics (context recall, answer correctness, ...). None ship with the package."""

    name: str

    def score(self, question: EvalQuestion, context: str, answer: str | None) -> dict[str, float]: ...


@dataclass
class EvalRow:
    question_id: str
    method: str
    c_erec: float
    context_edges: int
    latency_ms: float
    target_coverage: float | None = None
    extra: dict[str, float] = field(default_factory=dict)


@dataclass
class EvalReport:
    rows: list[EvalRow]
    params: dict = field(default_factory=dict)

    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.rows))

    def aggregates(self) -> dict[str, dict[str, float]]:
        out = {}
        for method in self.methods():
            rows = [r for r in self.rows if r.method == method]
            out[method] = {
                "count": len(rows),
                "c_erec_mean": statistics.fmean(r.c_erec for r in rows),
                "context_edges_mean": statistics.fmean(r.context_edges for r in rows),
                "latency_ms_mean": statistics.fmean(r.latency_ms for r in rows),
            }
        return out

    def to_dict(self) -> dict:
        return {"params": self.params, "rows": [asdict(r) for r in self.rows], "aggregates": self.aggregates()}

    def write(self, out_dir: str | Path, prefix: str = "report", figures: bool = True) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / f"{prefix}.csv", out / f"{prefix}.json"
        with csv_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                writer.writerow([r.question_id, r.method, f"{r.c_erec:.6f}", r.context_edges, f"{r.latency_ms:.3f}"])
        json_path.write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        written = [csv_path, json_path]
        if figures and self.rows:
            from ontorag.figures import render_report_figures

            written.extend(render_report_figures(self, out, prefix))
        return written


def run_eval(
    store: Store,
    questions: Sequence[EvalQuestion],
    methods: Sequence[str] = ("og", "rag"),
    k: int = DEFAULT_K,
    L: int | None = DEFAULT_L,
    pad_to_L: bool = False,
    ms: Sequence[int] = (2, 5),
    judge: Judge | None = None,
) -> EvalReport:
    """Retrieve a context for every question with every method and score it.

    ``rag`` is expanded into one method per baseline size in ``ms``
    (``rag@2``, ``rag@5``, ...).
    """
    unknown = set(methods) - {"og", "rag"}
    if unknown:
        raise ValueError(f"unknown methods: {', '.join(sorted(unknown))}")
    chunk_index = ChunkIndex(store.chunks, store.provider) if "rag" in methods else None
    rows: list[EvalRow] = []
    for q in sorted(questions, key=lambda q: q.id):
        if "og" in methods:
            t0 = time.perf_counter()
            ctx = retrieve(store, q.query, k, L, pad_to_L)
            elapsed = (time.perf_counter() - t0) * 1000
            text = render_context(ctx)
            targets = len(ctx.covered) + len(ctx.uncovered)
            rows.append(EvalRow(
                q.id, "og", context_entity_recall(text, q.reference_entities), len(ctx.edges), elapsed,
                len(ctx.covered) / targets if targets else 1.0,
                judge.score(q, text, None) if judge else {},
            ))
        if chunk_index is not None:
            for m in ms:
                t0 = time.perf_counter()
                hits = chunk_index.search(q.query, m)
                elapsed = (time.perf_counter() - t0) * 1000
                text = "\n\n".join(c.text for c, _ in hits)
                rows.append(EvalRow(
                    q.id, f"rag@{m}", context_entity_recall(text, q.reference_entities), len(hits), elapsed,
                    None, judge.score(q, text, None) if judge else {},
                ))
    params = {"methods": list(methods), "k": k, "L": L, "pad_to_L": pad_to_L, "m": list(ms)}
    return EvalReport(rows, params)
