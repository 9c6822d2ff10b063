"""Domain ontology: entities, attributes and typed triples.

An ontology is a set of ``(subject, attribute, value)`` triples where the
value is either another declared entity or :data:`UNSPECIFIED`, meaning the
slot is filled later with text taken from documents.

The on-disk format is a JSON document::

    {
      "entities": ["Crop", "CropRegion"],
      "triples": [
        {"subject": "Crop", "attribute": "is grown in", "value": "CropRegion"},
        {"subject": "Crop", "attribute": "has name", "value": null}
      ]
    }

``null`` encodes an unspecified value.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Union


class _Unspecified:
    _instance: _Unspecified | None = None

    def __new__(cls) -> _Unspecified:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNSPECIFIED"

    def __reduce__(self):
        return (_Unspecified, ())


UNSPECIFIED = _Unspecified()
"""Marker for an attribute whose value is free domain text."""

OntologyValue = Union[str, _Unspecified]


class OntologyError(ValueError):
    """Raised for malformed or inconsistent ontology definitions."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class Triple(NamedTuple):
    subject: str
    attribute: str
    value: OntologyValue

    @property
    def is_entity_valued(self) -> bool:
        return self.value is not UNSPECIFIED


def _clean_name(raw: object, what: str) -> str:
    if not isinstance(raw, str):
        raise OntologyError(f"{what} must be a string, got {type(raw).__name__}")
    name = raw.strip()
    if not name:
        raise OntologyError(f"{what} must be non-empty")
    return name


@dataclass(frozen=True)
class Ontology:
    """Immutable set of entities and functional attribute triples."""

    entities: tuple[str, ...] = ()
    triples: tuple[Triple, ...] = ()
    _lookup: dict[tuple[str, str], OntologyValue] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        entities = tuple(_clean_name(e, "entity name") for e in self.entities)
        if len(set(entities)) != len(entities):
            dupes = sorted({e for e in entities if entities.count(e) > 1})
            raise OntologyError(f"duplicate entity declaration: {', '.join(dupes)}")
        declared = set(entities)
        cleaned: list[Triple] = []
        for t in self.triples:
            subject = _clean_name(t[0], "triple subject")
            attribute = _clean_name(t[1], "triple attribute")
            value = t[2]
            if value is None or value is UNSPECIFIED:
                value = UNSPECIFIED
            else:
                value = _clean_name(value, "triple value")
                if value not in declared:
                    raise OntologyError(
                        f"undeclared entity {value!r} used as value of ({subject!r}, {attribute!r})"
                    )
            if subject not in declared:
                raise OntologyError(f"undeclared entity {subject!r} used as triple subject")
            if (subject, attribute) in self._lookup:
                raise OntologyError(f"duplicate attribute {attribute!r} on entity {subject!r}")
            self._lookup[(subject, attribute)] = value
            cleaned.append(Triple(subject, attribute, value))
        object.__setattr__(self, "entities", entities)
        object.__setattr__(self, "triples", tuple(cleaned))

    def expected_value(self, subject: str, attribute: str) -> OntologyValue | None:
        """Declared value for ``(subject, attribute)``, or ``None`` if there is no such triple."""
        return self._lookup.get((subject, attribute))

    def attributes_of(self, subject: str) -> list[Triple]:
        return [t for t in self.triples if t.subject == subject]

    def __contains__(self, pair: object) -> bool:
        return pair in self._lookup

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Ontology):
            return NotImplemented
        return set(self.entities) == set(other.entities) and set(self.triples) == set(other.triples)

    def __hash__(self) -> int:
        return hash((frozenset(self.entities), frozenset(self.triples)))

    def to_dict(self) -> dict:
        return {
            "entities": list(self.entities),
            "triples": [
                {
                    "subject": t.subject,
                    "attribute": t.attribute,
                    "value": None if t.value is UNSPECIFIED else t.value,
                }
                for t in self.triples
            ],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, ensure_ascii=False)

    def fingerprint(self) -> str:
        """Order-independent SHA-256 over the entity and triple sets."""
        canonical = {
            "entities": sorted(self.entities),
            "triples": sorted(
                [t.subject, t.attribute, None if t.value is UNSPECIFIED else t.value]
                for t in self.triples
            ),
        }
        blob = json.dumps(canonical, sort_keys=True, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def make_ontology(entities: Iterable[str], triples: Iterable[tuple[str, str, str | None]]) -> Ontology:
    return Ontology(tuple(entities), tuple(Triple(*t) for t in triples))


def parse_ontology(source: str) -> Ontology:
    """Parse ontology definition text (JSON) into an :class:`Ontology`."""
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise OntologyError(f"syntax error: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise OntologyError("ontology document must be a JSON object")
    entities = doc.get("entities", [])
    raw_triples = doc.get("triples", [])
    if not isinstance(entities, list) or not isinstance(raw_triples, list):
        raise OntologyError("'entities' and 'triples' must be arrays")
    triples = []
    for i, item in enumerate(raw_triples):
        if not isinstance(item, dict):
            raise OntologyError(f"triple #{i} must be an object")
        missing = {"subject", "attribute"} - item.keys()
        if missing:
            raise OntologyError(f"triple #{i} is missing {', '.join(sorted(missing))}")
        triples.append(Triple(item["subject"], item["attribute"], item.get("value")))
    return Ontology(tuple(entities), tuple(triples))


def load_ontology(path: str | Path) -> Ontology:
    return parse_ontology(Path(path).read_text(encoding="utf-8"))
