"""Document and annotation data model for span-annotated corpora.

The on-disk format is a compact BigBIO-style JSON document::

    {"documents": [
        {"id": "d1",
         "passages": [{"id": "d1-p0", "text": "lupus flare", "offset": 0}],
         "entities": [{"id": "m1", "offsets": [[0, 5]], "text": "lupus",
                       "type": "DISO",
                       "normalized": [{"db_name": "UMLS", "db_id": "C0024141"}]}]}
    ]}

A file may instead carry a top-level ``"splits"`` object mapping split names
to document lists. Offsets are code-point indices into the document text,
which is the concatenation of all passages placed at their offsets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

Span = tuple[int, int]


class DatasetError(ValueError):
    """Base class for dataset loading and validation failures."""


class ParseError(DatasetError):
    pass


class SchemaError(DatasetError):
    def __init__(self, field_name: str, where: str = ""):
        self.field_name = field_name
        loc = f" in {where}" if where else ""
        super().__init__(f"missing or invalid field {field_name!r}{loc}")


class SpanError(DatasetError):
    def __init__(self, document_id: str, mention_id: str, message: str):
        self.document_id = document_id
        self.mention_id = mention_id
        super().__init__(f"document {document_id!r}, mention {mention_id!r}: {message}")


@dataclass(frozen=True)
class ConceptRef:
    db_name: str
    db_id: str


@dataclass(frozen=True)
class Passage:
    id: str
    text: str
    offset: int = 0

    @property
    def end(self) -> int:
        return self.offset + len(self.text)


@dataclass(frozen=True)
class Mention:
    id: str
    spans: tuple[Span, ...]
    text: str
    entity_type: str | None = None
    gold_concepts: tuple[ConceptRef, ...] = ()
    long_form: str | None = None

    @property
    def start(self) -> int:
        return min(s for s, _ in self.spans)

    @property
    def end(self) -> int:
        return max(e for _, e in self.spans)


@dataclass(frozen=True)
class Document:
    id: str
    passages: tuple[Passage, ...]
    mentions: tuple[Mention, ...] = ()

    @property
    def text(self) -> str:
        """Full document text; gaps between passages are filled with spaces."""
        parts: list[str] = []
        pos = 0
        for p in self.passages:
            if p.offset > pos:
                parts.append(" " * (p.offset - pos))
                pos = p.offset
            parts.append(p.text[pos - p.offset:])
            pos = max(pos, p.end)
        return "".join(parts)


@dataclass(frozen=True)
class Dataset:
    splits: Mapping[str, tuple[Document, ...]] = field(default_factory=dict)

    def documents(self, split: str | None = None) -> Iterator[Document]:
        if split is not None:
            yield from self.splits.get(split, ())
            return
        for docs in self.splits.values():
            yield from docs

    def mentions(self, split: str | None = None) -> Iterator[tuple[Document, Mention]]:
        for doc in self.documents(split):
            for m in doc.mentions:
                yield doc, m

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return dict(self.splits) == dict(other.splits)


@dataclass(frozen=True)
class Violation:
    document_id: str
    mention_id: str | None
    rule: str
    message: str

    def __str__(self) -> str:
        where = self.document_id if self.mention_id is None else f"{self.document_id}/{self.mention_id}"
        return f"[{self.rule}] {where}: {self.message}"


def mention_text(text: str, spans: Sequence[Span]) -> str:
    """Surface form of a (possibly discontiguous) mention: fragments joined by one space."""
    return " ".join(text[s:e] for s, e in spans)


def validate_dataset(ds: Dataset) -> list[Violation]:
    violations: list[Violation] = []
    for split, docs in ds.splits.items():
        seen: set[str] = set()
        for doc in docs:
            if doc.id in seen:
                violations.append(Violation(doc.id, None, "duplicate-document", f"document id repeated in split {split!r}"))
            seen.add(doc.id)
            violations.extend(_validate_document(doc))
    return violations


def _validate_document(doc: Document) -> list[Violation]:
    out: list[Violation] = []
    prev_end = 0
    for p in doc.passages:
        if p.offset < prev_end:
            out.append(Violation(doc.id, None, "passage-order", f"passage {p.id!r} starts at {p.offset}, before {prev_end}"))
        prev_end = max(prev_end, p.end)
    text = doc.text
    for m in doc.mentions:
        if not m.spans:
            out.append(Violation(doc.id, m.id, "span-empty", "mention has no spans"))
            continue
        bad = False
        for s, e in m.spans:
            if not s < e:
                out.append(Violation(doc.id, m.id, "span-order", f"span ({s}, {e}) has end <= start"))
                bad = True
            elif s < 0 or e > len(text):
                out.append(Violation(doc.id, m.id, "span-bounds", f"span ({s}, {e}) outside text of length {len(text)}"))
                bad = True
        if not bad:
            expected = mention_text(text, m.spans)
            if m.text != expected:
                out.append(Violation(doc.id, m.id, "text-mismatch", f"mention text {m.text!r} != span text {expected!r}"))
        for ref in m.gold_concepts:
            if not ref.db_id:
                out.append(Violation(doc.id, m.id, "empty-db-id", "concept reference with empty db_id"))
    return out


def from_ner_spans(doc_id: str, text: str, spans: Iterable[tuple[int, int, str | None]]) -> Document:
    """Wrap NER tagger output (start, end, entity type) as an unnormalized document."""
    mentions = []
    for i, (start, end, etype) in enumerate(spans):
        if not 0 <= start < end <= len(text):
            raise SpanError(doc_id, f"{doc_id}-m{i}", f"span ({start}, {end}) out of bounds for text of length {len(text)}")
        mentions.append(Mention(id=f"{doc_id}-m{i}", spans=((start, end),), text=text[start:end], entity_type=etype))
    return Document(id=doc_id, passages=(Passage(f"{doc_id}-p0", text, 0),), mentions=tuple(mentions))


def with_mentions(doc: Document, mentions: Iterable[Mention]) -> Document:
    return replace(doc, mentions=tuple(mentions))


# -- serialization ---------------------------------------------------------


def _require(obj: Mapping, key: str, where: str):
    if not isinstance(obj, Mapping) or key not in obj:
        raise SchemaError(key, where)
    return obj[key]


def _parse_document(raw: Mapping) -> Document:
    doc_id = _require(raw, "id", "document")
    where = f"document {doc_id!r}"
    passages = []
    for p in _require(raw, "passages", where):
        passages.append(Passage(
            id=str(_require(p, "id", f"passage of {where}")),
            text=_require(p, "text", f"passage of {where}"),
            offset=int(_require(p, "offset", f"passage of {where}")),
        ))
    mentions = []
    for e in _require(raw, "entities", where):
        mid = _require(e, "id", f"entity of {where}")
        ewhere = f"entity {mid!r} of {where}"
        offsets = _require(e, "offsets", ewhere)
        try:
            spans = tuple((int(s), int(t)) for s, t in offsets)
        except (TypeError, ValueError):
            raise SchemaError("offsets", ewhere) from None
        refs = tuple(
            ConceptRef(str(_require(n, "db_name", ewhere)), str(_require(n, "db_id", ewhere)))
            for n in e.get("normalized", [])
        )
        mentions.append(Mention(
            id=str(mid),
            spans=spans,
            text=_require(e, "text", ewhere),
            entity_type=e.get("type"),
            gold_concepts=refs,
            long_form=e.get("long_form"),
        ))
    return Document(id=str(doc_id), passages=tuple(passages), mentions=tuple(mentions))


def dataset_from_json(obj: Mapping, split: str = "test") -> Dataset:
    if isinstance(obj, Mapping) and "splits" in obj:
        raw_splits = obj["splits"]
        if not isinstance(raw_splits, Mapping):
            raise SchemaError("splits")
        splits = {}
        for name, body in raw_splits.items():
            docs = body if isinstance(body, list) else _require(body, "documents", f"split {name!r}")
            splits[name] = tuple(_parse_document(d) for d in docs)
    else:
        docs = _require(obj, "documents", "top level")
        splits = {split: tuple(_parse_document(d) for d in docs)}
    return Dataset(splits)


def load_dataset(path: str | Path, format: str = "bigbio_json", split: str = "test") -> Dataset:
    """Load and validate a dataset file.

    Files with a bare ``"documents"`` list are loaded into ``split``.
    Span violations raise :class:`SpanError`; any other invariant violation
    raises :class:`DatasetError`.
    """
    if format != "bigbio_json":
        raise ValueError(f"unsupported dataset format {format!r}")
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from e
    ds = dataset_from_json(obj, split=split)
    violations = validate_dataset(ds)
    for v in violations:
        if v.rule.startswith("span"):
            raise SpanError(v.document_id, v.mention_id or "", v.message)
    if violations:
        raise DatasetError(str(violations[0]))
    return ds


def _document_to_json(doc: Document) -> dict:
    entities = []
    for m in doc.mentions:
        e = {
            "id": m.id,
            "offsets": [list(s) for s in m.spans],
            "text": m.text,
            "type": m.entity_type,
            "normalized": [{"db_name": r.db_name, "db_id": r.db_id} for r in m.gold_concepts],
        }
        if m.long_form is not None:
            e["long_form"] = m.long_form
        entities.append(e)
    return {
        "id": doc.id,
        "passages": [{"id": p.id, "text": p.text, "offset": p.offset} for p in doc.passages],
        "entities": entities,
    }


def dataset_to_json(ds: Dataset) -> dict:
    return {"splits": {name: [_document_to_json(d) for d in docs] for name, docs in ds.splits.items()}}


def save_dataset(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(dataset_to_json(ds), f, ensure_ascii=False, indent=1)
        f.write("\n")
