"""Query-time retrieval: relevant hypernodes, then a greedy hyperedge cover."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from ontorag.embedding import EmbeddingProvider, NodeIndex, embed, top_k
from ontorag.hypergraph import Hyperedge, Hypergraph, Hypernode

if TYPE_CHECKING:
    from ontorag.store import Store

DEFAULT_K = 5
DEFAULT_L = 10


@dataclass
class RelevantNodeSet:
    key_hits: list[tuple[Hypernode, float]]
    value_hits: list[tuple[Hypernode, float]]

    @property
    def merged(self) -> list[Hypernode]:
        """Union of both hit lists, first occurrence order (key hits first)."""
        seen: dict[Hypernode, None] = {}
        for n, _ in self.key_hits + self.value_hits:
            seen.setdefault(n, None)
        return list(seen)

    def scores(self) -> dict[Hypernode, float]:
        out: dict[Hypernode, float] = {}
        for n, s in self.key_hits + self.value_hits:
            out[n] = max(s, out.get(n, float("-inf")))
        return out


@dataclass
class RetrievedContext:
    edges: list[Hyperedge]
    covered: set[Hypernode]
    uncovered: set[Hypernode]
    k: int | None
    L: int | None
    gains: list[int] = field(default_factory=list)
    relevant: RelevantNodeSet | None = None

    @property
    def edge_ids(self) -> list[int]:
        return [e.edge_id for e in self.edges]

    def lines(self) -> list[str]:
        return [render_edge(e) for e in self.edges]

    def to_dict(self) -> dict:
        return {
            "params": {"k": self.k, "L": self.L},
            "edges": [
                {"id": e.edge_id, "provenance": e.provenance.to_dict(), "facts": e.as_dict()}
                for e in self.edges
            ],
            "covered": len(self.covered),
            "uncovered": len(self.uncovered),
        }


def render_edge(edge: Hyperedge) -> str:
    """One context line: the edge as a flat JSON object with sorted keys."""
    return json.dumps(edge.as_dict(), ensure_ascii=False, sort_keys=True)


def render_context(ctx: RetrievedContext) -> str:
    return "\n".join(ctx.lines())


def relevant_nodes(
    key_index: NodeIndex,
    value_index: NodeIndex,
    query,
    k: int = DEFAULT_K,
    provider: EmbeddingProvider | None = None,
) -> RelevantNodeSet:
    """Top-``k`` nodes by key similarity and top-``k`` by value similarity.

    ``query`` is either text (embedded with ``provider``) or a query vector.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(key_index) == 0:
        return RelevantNodeSet([], [])
    if isinstance(query, str):
        if provider is None:
            raise ValueError("a provider is needed to embed a text query")
        query = embed(provider, [query])[0]
    return RelevantNodeSet(top_k(key_index, query, k), top_k(value_index, query, k))


def greedy_cover(
    h: Hypergraph,
    targets,
    L: int | None = DEFAULT_L,
    pad_to_L: bool = False,
    node_scores: dict[Hypernode, float] | None = None,
) -> RetrievedContext:
    """Pick hyperedges covering ``targets`` greedily.

    Each step takes the edge containing the most still-uncovered targets
    (lowest edge id on ties) and stops once every target is covered or
    ``L`` edges are chosen. ``L=None`` means no cap. With ``pad_to_L`` the
    remaining slots are filled by unused edges ranked by the summed
    relevance of their nodes.
    """
    if L is not None and L < 1:
        raise ValueError("L must be >= 1")
    targets = set(targets)
    uncovered = set(targets)
    chosen: list[Hyperedge] = []
    gains: list[int] = []
    used: set[int] = set()
    while uncovered and (L is None or len(chosen) < L):
        gain: dict[int, int] = {}
        for n in uncovered:
            for eid in h.edges_of(n):
                gain[eid] = gain.get(eid, 0) + 1
        if not gain:
            break
        best = min(gain, key=lambda eid: (-gain[eid], eid))
        edge = h.edge(best)
        chosen.append(edge)
        used.add(best)
        gains.append(gain[best])
        uncovered.difference_update(edge.nodes)

    if pad_to_L and L is not None and len(chosen) < L:
        scores = node_scores or {}
        ranked = sorted(
            (e for e in h.edges if e.edge_id not in used),
            key=lambda e: (-sum(scores.get(n, 0.0) for n in e.nodes), e.edge_id),
        )
        for e in ranked[: L - len(chosen)]:
            chosen.append(e)
            gains.append(0)
    return RetrievedContext(chosen, targets - uncovered, uncovered, None, L, gains)


def retrieve(
    store: Store,
    query: str,
    k: int = DEFAULT_K,
    L: int | None = DEFAULT_L,
    pad_to_L: bool = False,
) -> RetrievedContext:
    """Relevant nodes for ``query`` followed by their greedy cover."""
    rel = relevant_nodes(store.key_index, store.value_index, query, k, store.provider)
    ctx = greedy_cover(store.hypergraph, rel.merged, L, pad_to_L, rel.scores())
    ctx.k = k
    ctx.relevant = rel
    return ctx
