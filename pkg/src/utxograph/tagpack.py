"""Attribution tag packs: YAML parsing with header inheritance, taxonomy
validation, and ingestion into an in-memory tag store.

A pack file has a header (title, creator, lastmod are mandatory) and a body
list of tags. Any body-level field may be abstracted into the header as a
default; a tag that repeats the field overrides the inherited value. Category
and abuse fields must resolve against the entity and abuse concept taxonomies
respectively.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import yaml

from .chain import IdMap
from .errors import DuplicateConcept, ParamError, ParseError, SchemaError, YamlError

TAXONOMY_NAMES = ("entity", "abuse")
TAXONOMY_HEADER = ["id", "label", "description", "uri"]

# Body-level fields that may be abstracted into the header as defaults.
INHERITABLE_FIELDS = ("label", "source", "category", "abuse", "currency", "lastmod")
TAG_FIELDS = ("address",) + INHERITABLE_FIELDS
HEADER_FIELDS = ("title", "creator", "lastmod", "tags") + INHERITABLE_FIELDS

VIOLATION_UNKNOWN_CONCEPT = "UnknownConcept"
VIOLATION_WRONG_TAXONOMY = "WrongTaxonomy"


@dataclass(frozen=True, slots=True)
class Concept:
    id: str
    label: str
    description: str
    uri: str


@dataclass(frozen=True, slots=True)
class Taxonomy:
    name: str
    concepts: tuple[Concept, ...]

    def __contains__(self, concept_id: str) -> bool:
        return any(c.id == concept_id for c in self.concepts)


@dataclass(frozen=True, slots=True)
class Tag:
    """One attribution tag with inheritance already applied."""

    address: str
    label: str
    currency: str
    lastmod: str
    source: str | None = None
    category: str | None = None
    abuse: str | None = None


@dataclass(frozen=True, slots=True)
class TagPack:
    title: str
    creator: str
    lastmod: str
    tags: tuple[Tag, ...]


@dataclass(frozen=True, slots=True)
class Violation:
    tag_index: int
    field: str
    value: str
    rule: str


@dataclass(frozen=True, slots=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True, slots=True)
class StoredTag:
    """A tag plus its originating pack's provenance fields."""

    address: str
    address_id: int | None
    label: str
    normalized_label: str
    currency: str
    lastmod: str
    source: str | None
    category: str | None
    abuse: str | None
    unobserved: bool
    pack_title: str
    pack_creator: str
    pack_lastmod: str


def normalize_label(label: str) -> str:
    """Indexing form: trimmed, lowercased, internal whitespace collapsed."""
    return " ".join(label.split()).lower()


def _as_date(value: object, field: str) -> str:
    if isinstance(value, dt.datetime):
        value = value.date()
    if isinstance(value, dt.date):
        return value.isoformat()
    if isinstance(value, str):
        try:
            return dt.date.fromisoformat(value.strip()).isoformat()
        except ValueError:
            pass
    raise SchemaError(field, f"expected ISO-8601 date, got {value!r}")


def _as_str(value: object, field: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise SchemaError(field, f"expected non-empty string, got {value!r}")
    return value.strip()


def expand_tag(defaults: dict, raw: dict) -> dict:
    """Apply header defaults to one body entry; explicit fields win."""
    merged = dict(defaults)
    merged.update(raw)
    return merged


def parse_tagpack(path: str | Path) -> TagPack:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise YamlError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("document", "top level must be a mapping")
    for key in doc:
        if key not in HEADER_FIELDS:
            raise SchemaError(str(key), "unknown header field")
    for field in ("title", "creator", "lastmod"):
        if field not in doc:
            raise SchemaError(field)

    title = _as_str(doc["title"], "title")
    creator = _as_str(doc["creator"], "creator")
    lastmod = _as_date(doc["lastmod"], "lastmod")

    defaults = {f: doc[f] for f in INHERITABLE_FIELDS if f in doc}
    defaults.setdefault("lastmod", lastmod)

    body = doc.get("tags")
    if not isinstance(body, list) or not body:
        raise SchemaError("tags", "expected a non-empty list")

    tags = []
    for index, raw in enumerate(body):
        if not isinstance(raw, dict):
            raise SchemaError("tags", f"tag {index} must be a mapping")
        for key in raw:
            if key not in TAG_FIELDS:
                raise SchemaError(str(key), f"unknown tag field (tag {index})")
        effective = expand_tag(defaults, raw)
        for field in ("address", "label", "currency"):
            if field not in effective:
                raise SchemaError(field, f"missing on tag {index}")
        tags.append(Tag(
            address=_as_str(effective["address"], "address"),
            label=_as_str(effective["label"], "label"),
            currency=_as_str(effective["currency"], "currency").upper(),
            lastmod=_as_date(effective["lastmod"], "lastmod"),
            source=_as_str(effective["source"], "source") if "source" in effective else None,
            category=_as_str(effective["category"], "category") if "category" in effective else None,
            abuse=_as_str(effective["abuse"], "abuse") if "abuse" in effective else None,
        ))
    return TagPack(title=title, creator=creator, lastmod=lastmod, tags=tuple(tags))


def load_taxonomy(path: str | Path, name: str | None = None) -> Taxonomy:
    """Load a concept list; the taxonomy name defaults to the file stem."""
    path = Path(path)
    if name is None:
        name = path.stem
    if name not in TAXONOMY_NAMES:
        raise ParseError(f"unknown taxonomy name {name!r}", path=str(path))
    concepts: list[Concept] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing CSV header", line=1, path=str(path)) from None
        if [h.strip() for h in header] != TAXONOMY_HEADER:
            raise ParseError(f"expected header {','.join(TAXONOMY_HEADER)}", line=1, path=str(path))
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 columns, got {len(row)}", line=lineno, path=str(path))
            concept_id = row[0].strip()
            if not concept_id:
                raise ParseError("empty concept id", line=lineno, path=str(path))
            if concept_id in seen:
                raise DuplicateConcept(f"{concept_id} (line {lineno})")
            seen.add(concept_id)
            concepts.append(Concept(concept_id, row[1].strip(), row[2].strip(), row[3].strip()))
    return Taxonomy(name=name, concepts=tuple(concepts))


def write_taxonomy(taxonomy: Taxonomy, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TAXONOMY_HEADER)
        for c in taxonomy.concepts:
            writer.writerow([c.id, c.label, c.description, c.uri])


def default_taxonomies() -> dict[str, Taxonomy]:
    """The concept lists bundled with the package."""
    out = {}
    base = resources.files("utxograph").joinpath("taxonomies")
    for name in TAXONOMY_NAMES:
        with resources.as_file(base.joinpath(f"{name}.csv")) as p:
            out[name] = load_taxonomy(p, name)
    return out


def validate_tagpack(pack: TagPack, taxonomies: Iterable[Taxonomy]) -> ValidationReport:
    """Check concept references. Violations are report entries, not faults."""
    by_name = {t.name: t for t in taxonomies}
    for name in TAXONOMY_NAMES:
        if name not in by_name:
            raise ParamError(f"{name} taxonomy not loaded")
    checks = (("category", "entity", "abuse"), ("abuse", "abuse", "entity"))
    violations = []
    for index, tag in enumerate(pack.tags):
        for field, own, other in checks:
            value = getattr(tag, field)
            if value is None:
                continue
            if value in by_name[own]:
                continue
            rule = VIOLATION_WRONG_TAXONOMY if value in by_name[other] else VIOLATION_UNKNOWN_CONCEPT
            violations.append(Violation(tag_index=index, field=field, value=value, rule=rule))
    return ValidationReport(violations=tuple(violations))


class TagStore:
    """Frozen index of stored tags by address id and by normalized label."""

    def __init__(self, tags: tuple[StoredTag, ...]):
        self.tags = tags
        by_address: dict[int, list[StoredTag]] = {}
        by_label: dict[str, list[StoredTag]] = {}
        for tag in tags:
            if tag.address_id is not None:
                by_address.setdefault(tag.address_id, []).append(tag)
            by_label.setdefault(tag.normalized_label, []).append(tag)
        self._by_address = {k: tuple(v) for k, v in by_address.items()}
        self._by_label = {k: tuple(v) for k, v in by_label.items()}

    def __len__(self) -> int:
        return len(self.tags)

    def for_address(self, address_id: int) -> tuple[StoredTag, ...]:
        return self._by_address.get(address_id, ())

    def for_label(self, label: str) -> tuple[StoredTag, ...]:
        return self._by_label.get(normalize_label(label), ())

    def labels(self) -> tuple[str, ...]:
        return tuple(sorted(self._by_label))

    @property
    def n_unobserved(self) -> int:
        return sum(1 for t in self.tags if t.unobserved)


def ingest_tags(packs: Iterable[TagPack], idmap: IdMap) -> TagStore:
    """Index tags from validated packs. Tags whose address is not on the
    chain are kept with unobserved=true; duplicates are retained as-is."""
    stored = []
    for pack in packs:
        for tag in pack.tags:
            address_id = idmap.address_ids.get(tag.address)
            stored.append(StoredTag(
                address=tag.address,
                address_id=address_id,
                label=tag.label,
                normalized_label=normalize_label(tag.label),
                currency=tag.currency,
                lastmod=tag.lastmod,
                source=tag.source,
                category=tag.category,
                abuse=tag.abuse,
                unobserved=address_id is None,
                pack_title=pack.title,
                pack_creator=pack.creator,
                pack_lastmod=pack.lastmod,
            ))
    return TagStore(tuple(stored))
