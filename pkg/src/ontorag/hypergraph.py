"""Flatten factual blocks into hyperedges and persist the resulting hypergraph.

A hypernode is a ``(key, value)`` pair: ``key`` joins the entity/attribute
path from the block root down to a text value with single spaces, e.g.
``"Seed is grown in CropRegion has a name"``. A hyperedge is the set of
hypernodes of one flattened block.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

from ontorag.blocks import EntityRef, FactualBlock

FORMAT_VERSION = 1
META_FILE = "meta.json"
EDGES_FILE = "edges.jsonl"


class FlattenError(ValueError):
    pass


class StoreFormatError(ValueError):
    """The on-disk store is missing, corrupt, or written by another format version."""


class Hypernode(NamedTuple):
    key: str
    value: str


def join_path(*segments: str) -> str:
    return " ".join(segments)


@dataclass(frozen=True)
class Provenance:
    block_id: str
    doc_id: str | None = None
    chunk_index: int | None = None
    char_span: tuple[int, int] | None = None

    @classmethod
    def of_block(cls, block: FactualBlock) -> Provenance:
        chunk = block.provenance
        if chunk is None:
            return cls(block.block_id)
        return cls(block.block_id, chunk.doc_id, chunk.chunk_index, tuple(chunk.char_span))

    def to_dict(self) -> dict:
        return {
            "block_id": self.block_id,
            "doc_id": self.doc_id,
            "chunk_index": self.chunk_index,
            "char_span": list(self.char_span) if self.char_span is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Provenance:
        span = d.get("char_span")
        return cls(d["block_id"], d.get("doc_id"), d.get("chunk_index"), tuple(span) if span is not None else None)


@dataclass(frozen=True)
class Hyperedge:
    edge_id: int
    nodes: tuple[Hypernode, ...]
    provenance: Provenance = field(default_factory=lambda: Provenance(""))

    def __post_init__(self) -> None:
        if self.edge_id < 0:
            raise ValueError("edge_id must be non-negative")
        nodes = tuple(sorted(set(self.nodes)))
        if not nodes:
            raise ValueError("a hyperedge needs at least one node")
        object.__setattr__(self, "nodes", nodes)

    def __contains__(self, node: object) -> bool:
        return node in self.nodes

    def as_dict(self) -> dict[str, str | list[str]]:
        """Flat key -> value map; keys that occur more than once map to a list."""
        out: dict[str, str | list[str]] = {}
        for n in self.nodes:
            if n.key in out:
                prev = out[n.key]
                out[n.key] = (prev if isinstance(prev, list) else [prev]) + [n.value]
            else:
                out[n.key] = n.value
        return out


def flatten(block: FactualBlock) -> list[tuple[Hypernode, ...]]:
    """Flatten one factual block into a list of flat key-value blocks.

    The first block holds the text-valued relations of the root entities.
    Every entity reached through an entity-valued relation then contributes
    a block made of everything on the way down plus its own text values,
    with keys prefixed by the full path. Children are visited in a canonical
    order so the output does not depend on how the relations were listed.
    """
    cycle = block.find_cycle()
    if cycle:
        raise FlattenError(f"block {block.block_id} has a cycle: {' -> '.join(map(str, cycle))}")

    leaves: dict[EntityRef, list[tuple[str, str]]] = {}
    children: dict[EntityRef, list[tuple[str, EntityRef]]] = {}
    for r in block.relations:
        if isinstance(r.value, str):
            leaves.setdefault(r.subject, []).append((r.attribute, r.value))
        else:
            children.setdefault(r.subject, []).append((r.attribute, r.value))

    signatures: dict[EntityRef, tuple] = {}

    def signature(entity: EntityRef) -> tuple:
        if entity not in signatures:
            signatures[entity] = (
                tuple(sorted(leaves.get(entity, ()))),
                tuple(sorted((a, c.name, signature(c)) for a, c in children.get(entity, ()))),
            )
        return signatures[entity]

    def ordered_children(entity: EntityRef) -> list[tuple[str, EntityRef]]:
        return sorted(children.get(entity, ()), key=lambda ac: (ac[0], ac[1].name, signature(ac[1])))

    roots = sorted(block.roots(), key=lambda e: (e.name, signature(e)))
    base = tuple(Hypernode(join_path(root.name, a), v) for root in roots for a, v in sorted(leaves.get(root, ())))
    out: list[tuple[Hypernode, ...]] = [base]

    def descend(inherited: tuple[Hypernode, ...], entity: EntityRef, path: str) -> None:
        here = inherited + tuple(Hypernode(join_path(path, a), v) for a, v in sorted(leaves.get(entity, ())))
        out.append(here)
        for a, child in ordered_children(entity):
            descend(here, child, join_path(path, a, child.name))

    for root in roots:
        for a, child in ordered_children(root):
            descend(base, child, join_path(root.name, a, child.name))

    seen: set[frozenset[Hypernode]] = set()
    result = []
    for flat in out:
        key = frozenset(flat)
        if key and key not in seen:
            seen.add(key)
            result.append(tuple(sorted(key)))
    return result


def drop_subset_blocks(flats: list[tuple[Hypernode, ...]]) -> list[tuple[Hypernode, ...]]:
    """Remove flattened blocks that are a strict subset of a sibling block."""
    sets = [frozenset(f) for f in flats]
    return [f for f, s in zip(flats, sets) if not any(s < other for other in sets)]


class Hypergraph:
    """Hyperedges plus the node -> edge-id incidence map.

    ``nodes`` keeps first-seen order (edge order, then node order inside the
    edge); vector indexes rely on that order for tie-breaking.
    """

    def __init__(self, edges: Iterable[Hyperedge] = ()):
        self.edges: list[Hyperedge] = list(edges)
        self.nodes: list[Hypernode] = []
        self.incidence: dict[Hypernode, list[int]] = {}
        self._by_id: dict[int, Hyperedge] = {}
        for e in self.edges:
            if e.edge_id in self._by_id:
                raise ValueError(f"duplicate edge id {e.edge_id}")
            self._by_id[e.edge_id] = e
            for n in e.nodes:
                if n not in self.incidence:
                    self.incidence[n] = []
                    self.nodes.append(n)
                self.incidence[n].append(e.edge_id)
        for ids in self.incidence.values():
            ids.sort()

    def edge(self, edge_id: int) -> Hyperedge:
        return self._by_id[edge_id]

    def edges_of(self, node: Hypernode) -> list[int]:
        return self.incidence.get(node, [])

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self) -> Iterator[Hyperedge]:
        return iter(self.edges)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return self.edges == other.edges

    def incidence_violations(self) -> list[str]:
        """Pairs breaking ``e in incidence[n] <=> n in e``; empty when exact."""
        problems = []
        for e in self.edges:
            for n in e.nodes:
                if e.edge_id not in self.incidence.get(n, ()):
                    problems.append(f"{n} in edge {e.edge_id} but not indexed")
        for n, ids in self.incidence.items():
            for eid in ids:
                if eid not in self._by_id or n not in self._by_id[eid].nodes:
                    problems.append(f"{n} indexed to edge {eid} but not a member")
        if set(self.nodes) != set(self.incidence):
            problems.append("node list differs from incidence keys")
        return problems


def build_hypergraph(blocks: Iterable[FactualBlock], dedupe_subset_edges: bool = False) -> Hypergraph:
    """One hyperedge per flattened block, ids in input order.

    Identical flattened blocks coming from different source blocks stay as
    separate edges so each keeps its own provenance.
    """
    edges = []
    for block in blocks:
        flats = flatten(block)
        if dedupe_subset_edges:
            flats = drop_subset_blocks(flats)
        prov = Provenance.of_block(block)
        for flat in flats:
            edges.append(Hyperedge(len(edges), flat, prov))
    return Hypergraph(edges)


def _edge_line(e: Hyperedge) -> str:
    record = {
        "id": e.edge_id,
        "provenance": e.provenance.to_dict(),
        "nodes": [{"key": n.key, "value": n.value} for n in e.nodes],
    }
    return json.dumps(record, ensure_ascii=False) + "\n"


def save_hypergraph(h: Hypergraph, path: str | Path, ontology_hash: str = "", extra_meta: dict | None = None) -> None:
    """Write ``meta.json`` and ``edges.jsonl`` into directory ``path``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    ids = [e.edge_id for e in h.edges]
    if any(b <= a for a, b in zip(ids, ids[1:])):
        raise StoreFormatError("edge ids must be strictly increasing")
    payload = "".join(_edge_line(e) for e in h.edges).encode("utf-8")
    (root / EDGES_FILE).write_bytes(payload)
    meta = {
        "format_version": FORMAT_VERSION,
        "ontology_hash": ontology_hash,
        "counts": {"edges": len(h.edges), "nodes": len(h.nodes)},
        "edges_sha256": hashlib.sha256(payload).hexdigest(),
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    if extra_meta:
        meta.update(extra_meta)
    (root / META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_meta(path: str | Path) -> dict:
    meta_path = Path(path) / META_FILE
    if not meta_path.exists():
        raise StoreFormatError(f"{meta_path} not found; run preprocess first")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise StoreFormatError(f"{meta_path} is not valid JSON: {exc}") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise StoreFormatError(
            f"store format version {meta.get('format_version')!r} is not supported (expected {FORMAT_VERSION})"
        )
    return meta


def load_hypergraph(path: str | Path) -> Hypergraph:
    root = Path(path)
    meta = read_meta(root)
    payload = (root / EDGES_FILE).read_bytes()
    if hashlib.sha256(payload).hexdigest() != meta.get("edges_sha256"):
        raise StoreFormatError(f"{root / EDGES_FILE} checksum mismatch")
    edges = []
    last = -1
    for lineno, line in enumerate(payload.decode("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec["id"] <= last:
            raise StoreFormatError(f"{EDGES_FILE}:{lineno}: edge ids must be strictly increasing")
        last = rec["id"]
        nodes = tuple(Hypernode(n["key"], n["value"]) for n in rec["nodes"])
        edges.append(Hyperedge(rec["id"], nodes, Provenance.from_dict(rec["provenance"])))
    return Hypergraph(edges)
