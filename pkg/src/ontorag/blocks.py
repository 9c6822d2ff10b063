"""Document chunks and ontology-mapped factual blocks."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Union

from ontorag.ontology import UNSPECIFIED, Ontology


@dataclass(frozen=True)
class DocumentChunk:
    doc_id: str
    chunk_index: int
    text: str
    char_span: tuple[int, int]

    def __post_init__(self) -> None:
        if self.chunk_index < 0:
            raise ValueError("chunk_index must be non-negative")
        start, end = self.char_span
        if not 0 <= start <= end or end - start != len(self.text):
            raise ValueError(f"char_span {self.char_span} inconsistent with text length {len(self.text)}")


class EntityRef(NamedTuple):
    """An entity instance inside one block.

    ``instance`` tells apart repeated occurrences of the same ontology entity
    (e.g. two growing zones listed under one crop).
    """

    name: str
    instance: int = 0

    def __str__(self) -> str:
        return self.name if self.instance == 0 else f"{self.name}#{self.instance}"


Value = Union[str, EntityRef]


class Relation(NamedTuple):
    subject: EntityRef
    attribute: str
    value: Value

    @property
    def is_leaf(self) -> bool:
        return isinstance(self.value, str)


def rel(subject: str | EntityRef, attribute: str, value: Value) -> Relation:
    """Shorthand: ``rel("Seed", "of crop", "Soybean")``."""
    if isinstance(subject, str):
        subject = EntityRef(subject)
    return Relation(subject, attribute, value)


def _sort_key(r: Relation) -> tuple:
    v = r.value
    vkey = (0, v, 0) if isinstance(v, str) else (1, v.name, v.instance)
    return (r.subject.name, r.subject.instance, r.attribute, vkey)


@dataclass(frozen=True)
class FactualBlock:
    """A self-contained set of ontology relations taken from one chunk."""

    block_id: str
    relations: tuple[Relation, ...]
    provenance: DocumentChunk | None = None
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        # a set of relations; canonical order makes every downstream step deterministic
        object.__setattr__(self, "relations", tuple(sorted(set(self.relations), key=_sort_key)))

    def subjects(self) -> set[EntityRef]:
        return {r.subject for r in self.relations}

    def objects(self) -> set[EntityRef]:
        return {r.value for r in self.relations if isinstance(r.value, EntityRef)}

    def roots(self) -> list[EntityRef]:
        objs = self.objects()
        return sorted(self.subjects() - objs)

    def dangling_refs(self) -> list[EntityRef]:
        """Referenced entities that carry no relations of their own (leaf entities)."""
        return sorted(self.objects() - self.subjects())

    def find_cycle(self) -> list[EntityRef] | None:
        children: dict[EntityRef, list[EntityRef]] = {}
        for r in self.relations:
            if isinstance(r.value, EntityRef):
                children.setdefault(r.subject, []).append(r.value)
        state: dict[EntityRef, int] = {}
        stack: list[EntityRef] = []

        def visit(node: EntityRef) -> list[EntityRef] | None:
            state[node] = 1
            stack.append(node)
            for child in children.get(node, ()):
                if state.get(child) == 1:
                    return stack[stack.index(child):] + [child]
                if child not in state:
                    found = visit(child)
                    if found:
                        return found
            stack.pop()
            state[node] = 2
            return None

        for node in sorted(children):
            if node not in state:
                found = visit(node)
                if found:
                    return found
        return None


def ontology_violations(block: FactualBlock, ontology: Ontology) -> list[str]:
    """Relations in ``block`` that disagree with the ontology's declared values."""
    problems = []
    for r in block.relations:
        expected = ontology.expected_value(r.subject.name, r.attribute)
        if expected is None:
            problems.append(f"({r.subject}, {r.attribute!r}) not declared in ontology")
        elif expected is UNSPECIFIED:
            if not isinstance(r.value, str):
                problems.append(f"({r.subject}, {r.attribute!r}) expects text, got entity {r.value}")
        elif not isinstance(r.value, EntityRef) or r.value.name != expected:
            problems.append(f"({r.subject}, {r.attribute!r}) expects entity {expected!r}, got {r.value!r}")
    return problems


_PARAGRAPH = re.compile(r"\n[ \t]*\n")


def chunk_text(text: str, budget: int) -> list[tuple[int, int]]:
    """Split ``text`` into spans of at most ``budget`` characters.

    A span ends at the last paragraph break that fits in the budget; when
    none fits it is cut hard at the budget.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    spans = []
    start, n = 0, len(text)
    while start < n:
        limit = min(start + budget, n)
        end = limit
        if limit < n:
            best = None
            for m in _PARAGRAPH.finditer(text, start, limit):
                if m.start() > start:
                    best = m.start()
            if best is not None:
                end = best
        spans.append((start, end))
        start = end
    return spans


def chunk_documents(docs: Iterable[tuple[str, str]], budget: int = 12_000) -> list[DocumentChunk]:
    chunks = []
    for doc_id, text in docs:
        for i, (s, e) in enumerate(chunk_text(text, budget)):
            chunks.append(DocumentChunk(doc_id, i, text[s:e], (s, e)))
    return chunks
