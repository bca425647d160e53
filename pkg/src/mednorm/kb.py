"""Target knowledge bases: concepts with multilingual aliases and semantic types.

Knowledge bases are built from UMLS Metathesaurus RRF files (``MRCONSO.RRF``
and ``MRSTY.RRF``) or from a JSONL concept dictionary, restricted to the
configured languages, source vocabularies and semantic groups. The
serialized form is JSONL, one concept per line, sorted by concept id.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

logger = logging.getLogger(__name__)

# ISO 639-1 -> UMLS LAT
LANGUAGE_CODES = {
    "ar": "ARA", "cs": "CZE", "da": "DAN", "de": "GER", "el": "GRE", "en": "ENG",
    "es": "SPA", "et": "EST", "fi": "FIN", "fr": "FRE", "he": "HEB", "hr": "HRV",
    "hu": "HUN", "it": "ITA", "ja": "JPN", "ko": "KOR", "lv": "LAV", "nl": "DUT",
    "no": "NOR", "pl": "POL", "pt": "POR", "ru": "RUS", "sv": "SWE", "tr": "TUR",
    "uk": "UKR", "zh": "CHI",
}
UMLS_LANGUAGES = {v: k for k, v in LANGUAGE_CODES.items()}

MRCONSO_FIELDS = 18
MRSTY_FIELDS = 6


class KnowledgeBaseError(ValueError):
    pass


class EmptyKnowledgeBaseError(KnowledgeBaseError):
    pass


class RrfFormatError(KnowledgeBaseError):
    def __init__(self, path: Path, row: int, message: str):
        self.path = path
        self.row = row
        super().__init__(f"{path}:{row}: {message}")


class KbFormatError(KnowledgeBaseError):
    def __init__(self, path: Path | str, line: int, message: str):
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class Alias(NamedTuple):
    value: str
    language: str


@dataclass(frozen=True)
class Concept:
    concept_id: str
    canonical_name: str
    semantic_types: tuple[str, ...] = ()
    aliases: tuple[Alias, ...] = ()

    def alias_values(self) -> list[str]:
        return [a.value for a in self.aliases]

    def to_json(self) -> dict:
        return {
            "concept_id": self.concept_id,
            "canonical_name": self.canonical_name,
            "semantic_types": list(self.semantic_types),
            "aliases": [{"value": a.value, "language": a.language} for a in self.aliases],
        }


@dataclass(frozen=True)
class KnowledgeBase:
    name: str
    concepts: Mapping[str, Concept]
    group_map: Mapping[str, str] = field(default_factory=dict)
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.concepts)

    def __iter__(self) -> Iterator[Concept]:
        return iter(self.concepts.values())

    def __contains__(self, concept_id: object) -> bool:
        return concept_id in self.concepts

    def __getitem__(self, concept_id: str) -> Concept:
        return self.concepts[concept_id]

    def alias_rows(self) -> list[tuple[str, str]]:
        """One ``(alias, concept_id)`` pair per alias occurrence, in KB order."""
        return [(a.value, c.concept_id) for c in self.concepts.values() for a in c.aliases]

    def groups_of(self, concept_id: str) -> set[str]:
        return {self.group_map[t] for t in self.concepts[concept_id].semantic_types if t in self.group_map}

    def to_jsonl(self) -> str:
        return "".join(json.dumps(c.to_json(), ensure_ascii=False) + "\n" for c in self.concepts.values())

    @cached_property
    def kb_hash(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class KbConfig:
    name: str
    source: str = "jsonl"  # "umls_rrf" | "jsonl"
    meta_path: Path | None = None
    path: Path | None = None
    languages: tuple[str, ...] = ("en",)
    semantic_groups: tuple[str, ...] | None = None
    source_vocabularies: tuple[str, ...] | None = None
    include_suppressed: bool = False
    group_map_path: Path | None = None

    def __post_init__(self):
        if self.source not in ("umls_rrf", "jsonl"):
            raise KnowledgeBaseError(f"unknown KB source {self.source!r}")
        if self.source == "umls_rrf" and self.meta_path is None:
            raise KnowledgeBaseError("umls_rrf source requires meta_path")
        if self.source == "jsonl" and self.path is None:
            raise KnowledgeBaseError("jsonl source requires path")


def load_group_map(path: str | Path | None = None) -> dict[str, str]:
    """Read a ``semantic_type<TAB>group`` table; defaults to the UMLS semantic groups."""
    if path is None:
        text = resources.files("mednorm.data").joinpath("semantic_groups.tsv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    out = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        out[cols[0]] = cols[1]
    return out


def make_concept(concept_id: str, aliases: Iterable[Alias], semantic_types: Sequence[str] = (),
                 preferred: str | None = None) -> Concept:
    """Build a concept with aliases deduplicated and sorted by (language, value)."""
    uniq = sorted(set(aliases), key=lambda a: (a.language, a.value))
    if not uniq:
        raise KnowledgeBaseError(f"concept {concept_id!r} has no aliases")
    canonical = preferred if preferred is not None and any(a.value == preferred for a in uniq) else uniq[0].value
    return Concept(concept_id, canonical, tuple(semantic_types), tuple(uniq))


def _new_kb(name: str, concepts: Iterable[Concept], group_map: Mapping[str, str], metadata=None) -> KnowledgeBase:
    ordered = {c.concept_id: c for c in sorted(concepts, key=lambda c: c.concept_id)}
    return KnowledgeBase(name, ordered, dict(group_map), dict(metadata or {}))


def _in_groups(types: Sequence[str], group_map: Mapping[str, str], groups: Sequence[str] | None) -> bool:
    if groups is None:
        return True
    wanted = set(groups)
    return any(group_map.get(t) in wanted for t in types)


def _read_rrf(path: Path, width: int) -> Iterator[tuple[int, list[str]]]:
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8") as f:
        for row, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            cols = line.split("|")
            # rows end with a trailing delimiter
            if cols and cols[-1] == "" and len(cols) == width + 1:
                cols = cols[:-1]
            if len(cols) != width:
                raise RrfFormatError(path, row, f"expected {width} fields, found {len(cols)}")
            yield row, cols


def _build_from_rrf(config: KbConfig, group_map: Mapping[str, str]) -> list[Concept]:
    meta = Path(config.meta_path)
    types: dict[str, list[str]] = {}
    for _, cols in _read_rrf(meta / "MRSTY.RRF", MRSTY_FIELDS):
        cui, tui = cols[0], cols[1]
        bucket = types.setdefault(cui, [])
        if tui not in bucket:
            bucket.append(tui)

    lats = {}
    for lang in config.languages:
        if lang not in LANGUAGE_CODES:
            raise KnowledgeBaseError(f"unknown language code {lang!r}")
        lats[LANGUAGE_CODES[lang]] = lang
    vocabs = set(config.source_vocabularies) if config.source_vocabularies else None

    aliases: dict[str, list[Alias]] = {}
    preferred: dict[str, str] = {}
    for row, cols in _read_rrf(meta / "MRCONSO.RRF", MRCONSO_FIELDS):
        cui, lat, ts, stt, ispref, sab, string, suppress = (
            cols[0], cols[1], cols[2], cols[4], cols[6], cols[11], cols[14], cols[16])
        if not cui:
            raise RrfFormatError(meta / "MRCONSO.RRF", row, "empty CUI")
        if lat not in lats or not string:
            continue
        if vocabs is not None and sab not in vocabs:
            continue
        if suppress not in ("", "N") and not config.include_suppressed:
            continue
        if not _in_groups(types.get(cui, ()), group_map, config.semantic_groups):
            continue
        aliases.setdefault(cui, []).append(Alias(string, lats[lat]))
        if ts == "P" and stt == "PF" and ispref == "Y":
            preferred.setdefault(cui, string)
    return [make_concept(cui, al, types.get(cui, ()), preferred.get(cui)) for cui, al in aliases.items()]


def _parse_concept_line(obj: Mapping, path, lineno: int) -> Concept:
    try:
        cid = obj["concept_id"]
        raw_aliases = obj["aliases"]
    except (KeyError, TypeError) as e:
        raise KbFormatError(path, lineno, f"missing field {e}") from None
    aliases = []
    for a in raw_aliases:
        if isinstance(a, str):
            aliases.append(Alias(a, obj.get("language", "")))
        else:
            aliases.append(Alias(a["value"], a.get("language", "")))
    if any(not a.value for a in aliases):
        raise KbFormatError(path, lineno, f"empty alias for concept {cid!r}")
    if not aliases:
        raise KbFormatError(path, lineno, f"concept {cid!r} has no aliases")
    canonical = obj.get("canonical_name") or aliases[0].value
    if canonical not in {a.value for a in aliases}:
        raise KbFormatError(path, lineno, f"canonical name {canonical!r} of {cid!r} is not among its aliases")
    return Concept(str(cid), canonical, tuple(obj.get("semantic_types", ())), tuple(aliases))


def _iter_concept_file(path: Path) -> Iterator[Concept]:
    if not Path(path).exists():
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise KbFormatError(path, lineno, str(e)) from None
            yield _parse_concept_line(obj, path, lineno)


def _build_from_jsonl(config: KbConfig, group_map: Mapping[str, str]) -> list[Concept]:
    langs = set(config.languages)
    out = []
    for c in _iter_concept_file(Path(config.path)):
        if not _in_groups(c.semantic_types, group_map, config.semantic_groups):
            continue
        kept = [a for a in c.aliases if a.language in langs]
        if kept:
            out.append(make_concept(c.concept_id, kept, c.semantic_types, c.canonical_name))
    return out


def build_kb(config: KbConfig, group_map: Mapping[str, str] | None = None) -> KnowledgeBase:
    if group_map is None:
        group_map = load_group_map(config.group_map_path)
    if config.source == "umls_rrf":
        concepts = _build_from_rrf(config, group_map)
    else:
        concepts = _build_from_jsonl(config, group_map)
    if not concepts:
        raise EmptyKnowledgeBaseError(f"knowledge base {config.name!r} is empty after filtering")
    meta = {"source": config.source, "languages": list(config.languages),
            "canonical_name": "preferred term if flagged, else first alias by (language, value)"}
    return _new_kb(config.name, concepts, group_map, meta)


def load_kb(path: str | Path, group_map: Mapping[str, str] | None = None, name: str | None = None) -> KnowledgeBase:
    path = Path(path)
    concepts: dict[str, Concept] = {}
    for c in _iter_concept_file(path):
        if c.concept_id in concepts:
            raise KnowledgeBaseError(f"{path}: duplicate concept id {c.concept_id!r}")
        concepts[c.concept_id] = c
    if not concepts:
        raise EmptyKnowledgeBaseError(f"{path}: no concepts")
    if group_map is None:
        group_map = load_group_map()
    return _new_kb(name or path.stem, concepts.values(), group_map)


def save_kb(kb: KnowledgeBase, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(kb.to_jsonl())


@dataclass(frozen=True)
class AliasSourceReport:
    added: int
    skipped: int
    unknown_ids: tuple[str, ...]


def add_alias_source(kb: KnowledgeBase, path: str | Path) -> tuple[KnowledgeBase, AliasSourceReport]:
    """Extend concepts with aliases from a ``concept_id<TAB>value<TAB>language`` file.

    Aliases already present for a concept (compared case-insensitively) are
    skipped; rows naming unknown concepts are collected, not fatal.
    """
    extra: dict[str, list[Alias]] = {}
    added = skipped = 0
    unknown: list[str] = []
    seen = {cid: {a.value.casefold() for a in c.aliases} for cid, c in kb.concepts.items()}
    with open(path, encoding="utf-8", newline="") as f:
        for row in csv.reader(f, delimiter="\t"):
            if not row or row[0].startswith("#"):
                continue
            cid, value, lang = (row + ["", ""])[:3]
            if cid not in kb.concepts:
                if cid not in unknown:
                    unknown.append(cid)
                continue
            key = value.casefold()
            if not value or key in seen[cid]:
                skipped += 1
                continue
            seen[cid].add(key)
            extra.setdefault(cid, []).append(Alias(value, lang))
            added += 1
    if unknown:
        logger.warning("%d alias rows reference unknown concepts", len(unknown))
    concepts = [replace(c, aliases=c.aliases + tuple(extra.get(c.concept_id, ()))) for c in kb]
    new_kb = KnowledgeBase(kb.name, {c.concept_id: c for c in concepts}, kb.group_map, kb.metadata)
    return new_kb, AliasSourceReport(added, skipped, tuple(unknown))
