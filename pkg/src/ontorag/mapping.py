"""Map document chunks onto an ontology through a language model.

The model is asked for JSON-LD with a top-level ``@graph`` array; every
element of that array becomes one :class:`~ontorag.blocks.FactualBlock`.
Relations that disagree with the ontology are dropped one at a time and
logged, so a single bad attribute never costs the whole chunk.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from ontorag.blocks import DocumentChunk, EntityRef, FactualBlock, Relation
from ontorag.llm import LanguageModelClient, LLMError
from ontorag.ontology import UNSPECIFIED, Ontology, parse_ontology

log = logging.getLogger("ontorag.mapping")

MAPPING_PROMPT_TEMPLATE = (
    "Here is a context definition for wheat crop cultivation ontology.\n"
    "Context Definition:\n"
    "{context_definition}\n"
    "-----------------\n"
    "Generate a JSON-LD using the following data and the above context definition for crop cultivation ontology.\n"
    "Use '@graph' object namespace for the data in JSON-LD.\n"
    "Be comprehensive and make sure to fill all of the data.\n"
    "Keep nesting to the minimum and still be able to disambiguate.\n"
    "If there are multiple subfields enumerated in a 'List' namespace then do not combine them in a single subfield, keep them as separate subfields to disambiguate.\n"
    "Ensure that you populate all items in the 'List' namespace, do not leave any item.\n"
    "Do not include any explanations or apologies in your response.\n"
    "Do not add any other text other than the generated JSON-LD in your response.\n"
    "Generate in Json format.\n"
    "----------------------\n"
    "Data:\n"
    "\n"
    "{data}\n"
    "---------------------\n"
    "JSON-LD json:"
)

_CTX_OPEN = "Context Definition:\n"
_CTX_CLOSE = "\n-----------------\nGenerate a JSON-LD"
_DATA_OPEN = "----------------------\nData:\n\n"
_DATA_CLOSE = "\n---------------------\nJSON-LD json:"


class MappingError(ValueError):
    """The model's answer could not be turned into factual blocks."""


def build_mapping_prompt(context_definition: str, chunk: DocumentChunk | str) -> str:
    data = chunk.text if isinstance(chunk, DocumentChunk) else chunk
    # str.format substitutes in one pass, so braces inside the values stay literal
    return MAPPING_PROMPT_TEMPLATE.format(context_definition=context_definition, data=data)


def split_mapping_prompt(prompt: str) -> tuple[str, str]:
    """Inverse of :func:`build_mapping_prompt`: ``(context_definition, data)``."""
    try:
        c0 = prompt.index(_CTX_OPEN) + len(_CTX_OPEN)
        c1 = prompt.index(_CTX_CLOSE, c0)
        d0 = prompt.index(_DATA_OPEN, c1) + len(_DATA_OPEN)
        d1 = prompt.rindex(_DATA_CLOSE)
    except ValueError:
        raise MappingError("prompt does not follow the mapping template") from None
    return prompt[c0:c1], prompt[d0:d1]


def _scalar_text(value: Any) -> str | None:
    if isinstance(value, str):
        return value.strip()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return json.dumps(value)
    if isinstance(value, dict) and "@value" in value:
        return _scalar_text(value["@value"])
    return None


def _element_type(obj: dict) -> str | None:
    t = obj.get("@type")
    if isinstance(t, list):
        t = t[0] if t else None
    return t.strip() if isinstance(t, str) else None


class _BlockBuilder:
    def __init__(self, ontology: Ontology, warnings: list[str]):
        self.ontology = ontology
        self.warnings = warnings
        self.relations: list[Relation] = []
        self.counters: dict[str, int] = {}

    def new_instance(self, name: str) -> EntityRef:
        n = self.counters.get(name, 0)
        self.counters[name] = n + 1
        return EntityRef(name, n)

    def warn(self, msg: str) -> None:
        self.warnings.append(msg)
        log.warning(msg, extra={"event": "relation_dropped"})

    def add_object(self, obj: dict, entity: str) -> EntityRef:
        me = self.new_instance(entity)
        for key, raw in obj.items():
            if key.startswith("@"):
                continue
            attribute = key.strip()
            expected = self.ontology.expected_value(entity, attribute)
            if expected is None:
                self.warn(f"dropped ({entity}, {attribute!r}): attribute not in ontology")
                continue
            items = raw if isinstance(raw, list) else [raw]
            for item in items:
                if item is None:
                    continue
                if expected is UNSPECIFIED:
                    text = _scalar_text(item)
                    if text is None:
                        self.warn(f"dropped ({entity}, {attribute!r}): expected text, got {type(item).__name__}")
                    elif text:
                        self.relations.append(Relation(me, attribute, text))
                    continue
                if not isinstance(item, dict):
                    self.warn(f"dropped ({entity}, {attribute!r}): expected {expected} object, got text")
                    continue
                declared = _element_type(item)
                if declared is not None and declared != expected:
                    self.warn(f"dropped ({entity}, {attribute!r}): expected {expected}, got @type {declared}")
                    continue
                child = self.add_object(item, expected)
                self.relations.append(Relation(me, attribute, child))
        return me


def parse_jsonld_graph(
    raw: str | dict,
    ontology: Ontology,
    provenance: DocumentChunk | None = None,
    warnings: list[str] | None = None,
) -> list[FactualBlock]:
    """Turn a JSON-LD ``@graph`` document into factual blocks, one per element."""
    warnings = [] if warnings is None else warnings
    if isinstance(raw, str):
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MappingError(f"invalid JSON: {exc}") from None
    else:
        doc = raw
    if not isinstance(doc, dict) or not isinstance(doc.get("@graph"), list):
        raise MappingError("JSON-LD has no top-level '@graph' array")

    prefix = f"{provenance.doc_id}#{provenance.chunk_index}" if provenance else "block"
    blocks = []
    for i, element in enumerate(doc["@graph"]):
        if not isinstance(element, dict):
            warnings.append(f"dropped @graph[{i}]: not an object")
            log.warning(warnings[-1], extra={"event": "element_dropped"})
            continue
        entity = _element_type(element)
        if entity is None or entity not in ontology.entities:
            warnings.append(f"dropped @graph[{i}]: unknown @type {entity!r}")
            log.warning(warnings[-1], extra={"event": "element_dropped"})
            continue
        local: list[str] = []
        builder = _BlockBuilder(ontology, local)
        builder.add_object(element, entity)
        warnings.extend(local)
        if builder.relations:
            blocks.append(FactualBlock(f"{prefix}/{i}", tuple(builder.relations), provenance, tuple(local)))
    return blocks


_FENCE = re.compile(r"^\s*```(?:json|jsonld|json-ld)?\s*\n(.*?)\n\s*```\s*$", re.S | re.I)


def extract_json_text(completion: str) -> str:
    """Strip a Markdown code fence if the model wrapped its JSON in one."""
    m = _FENCE.match(completion)
    return m.group(1) if m else completion.strip()


class MappingCache:
    """Completed mapping calls keyed by (chunk hash, ontology hash, model)."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._data: dict[str, str] = {}
        if self.path and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    row = json.loads(line)
                    self._data[row["key"]] = row["response"]

    @staticmethod
    def key(chunk_text: str, ontology_hash: str, model: str) -> str:
        chunk_hash = hashlib.sha256(chunk_text.encode("utf-8")).hexdigest()
        return f"{model}:{ontology_hash[:16]}:{chunk_hash}"

    def get(self, key: str) -> str | None:
        with self._lock:
            return self._data.get(key)

    def put(self, key: str, response: str) -> None:
        with self._lock:
            self._data[key] = response

    def __len__(self) -> int:
        return len(self._data)

    def save(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            lines = [
                json.dumps({"key": k, "response": self._data[k]}, ensure_ascii=False)
                for k in sorted(self._data)
            ]
        self.path.write_text("".join(line + "\n" for line in lines), encoding="utf-8", newline="\n")


def map_chunk(
    client: LanguageModelClient,
    ontology: Ontology,
    chunk: DocumentChunk,
    context_definition: str | None = None,
    cache: MappingCache | None = None,
    warnings: list[str] | None = None,
) -> list[FactualBlock]:
    """Ask ``client`` to map one chunk and parse its answer into blocks.

    Raises :class:`MappingError` when the answer is not usable JSON-LD and
    :class:`~ontorag.llm.LLMError` when the client cannot be reached.
    """
    if not chunk.text.strip():
        return []
    ctx = context_definition if context_definition is not None else ontology.to_json()
    key = MappingCache.key(chunk.text, ontology.fingerprint(), getattr(client, "model", "unknown"))
    raw = cache.get(key) if cache is not None else None
    if raw is None:
        raw = client.complete(build_mapping_prompt(ctx, chunk))
        blocks = parse_jsonld_graph(extract_json_text(raw), ontology, chunk, warnings)
        if cache is not None:
            cache.put(key, raw)
        return blocks
    return parse_jsonld_graph(extract_json_text(raw), ontology, chunk, warnings)


@dataclass
class MappingReport:
    blocks: list[FactualBlock] = field(default_factory=list)
    failed_chunks: list[tuple[str, int, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def map_chunks(
    client: LanguageModelClient,
    ontology: Ontology,
    chunks: Iterable[DocumentChunk],
    context_definition: str | None = None,
    cache: MappingCache | None = None,
    concurrency: int = 4,
) -> MappingReport:
    """Map every chunk, skipping (and recording) the ones that fail.

    Results are merged in ``(doc_id, chunk_index)`` order whatever order the
    requests complete in.
    """
    ordered = sorted(chunks, key=lambda c: (c.doc_id, c.chunk_index))

    def work(chunk: DocumentChunk):
        local: list[str] = []
        try:
            return map_chunk(client, ontology, chunk, context_definition, cache, local), local, None
        except (MappingError, LLMError) as exc:
            log.warning(
                "chunk skipped: %s", exc,
                extra={"event": "chunk_failed", "doc_id": chunk.doc_id, "chunk_index": chunk.chunk_index},
            )
            return [], local, str(exc)

    if concurrency > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            results = list(pool.map(work, ordered))
    else:
        results = [work(c) for c in ordered]

    report = MappingReport()
    for chunk, (blocks, local, err) in zip(ordered, results):
        report.blocks.extend(blocks)
        report.warnings.extend(f"{chunk.doc_id}#{chunk.chunk_index}: {w}" for w in local)
        if err is not None:
            report.failed_chunks.append((chunk.doc_id, chunk.chunk_index, err))
    return report


class StubMappingClient:
    """Offline rule-based stand-in for the mapping model.

    Reads the ontology and the data back out of the mapping prompt and, for
    each sentence shaped like ``<X> <attribute> [the] <Y>``, emits one
    ``@graph`` element using the first ontology triple whose attribute
    matches. ``X`` fills the subject's first text attribute; ``Y`` fills the
    attribute itself, or the first text attribute of the target entity when
    the attribute points at another entity.
    """

    model = "stub-mapper"

    def complete(self, prompt: str) -> str:
        ctx, data = split_mapping_prompt(prompt)
        ontology = parse_ontology(ctx)
        graph = []
        for sentence in re.split(r"[.;\n]+", data):
            sentence = " ".join(sentence.split())
            if sentence:
                element = self._match(ontology, sentence)
                if element is not None:
                    graph.append(element)
        return json.dumps({"@graph": graph}, ensure_ascii=False)

    @staticmethod
    def _label_attribute(ontology: Ontology, entity: str, skip: str | None = None) -> str | None:
        for t in ontology.attributes_of(entity):
            if t.value is UNSPECIFIED and t.attribute != skip:
                return t.attribute
        return None

    def _match(self, ontology: Ontology, sentence: str) -> dict | None:
        for t in ontology.triples:
            pattern = rf"^(?P<x>.+?)\s+{re.escape(t.attribute)}\s+(?:the\s+)?(?P<y>.+)$"
            m = re.match(pattern, sentence, re.I)
            if not m:
                continue
            x, y = m.group("x").strip(), m.group("y").strip()
            element: dict[str, Any] = {"@type": t.subject}
            label = self._label_attribute(ontology, t.subject, skip=t.attribute)
            if label:
                element[label] = x
            if t.value is UNSPECIFIED:
                element[t.attribute] = y
            else:
                target_label = self._label_attribute(ontology, t.value)
                if target_label is None:
                    continue
                element[t.attribute] = {"@type": t.value, target_label: y}
            return element
        return None
