"""Candidate generation over datasets, ensembling, type filtering and abbreviation expansion."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Mapping, Protocol, Sequence

from .abbreviations import find_abbreviations
from .candidates import CandidateList, ensemble_merge, truncate
from .datamodel import Dataset, Document
from .dense import DenseIndex, EmbeddingProvider, query_dense
from .kb import KnowledgeBase
from .sparse import SparseIndex, query_sparse

logger = logging.getLogger(__name__)

DEFAULT_K = 64


class KbMismatchError(ValueError):
    pass


class CandidateGenerator(Protocol):
    name: str
    kb_hash: str

    def predict(self, texts: Sequence[str], mention_ids: Sequence[str], k: int) -> list[CandidateList]: ...


@dataclass(frozen=True)
class SparseGenerator:
    index: SparseIndex
    name: str = "sparse"

    @property
    def kb_hash(self) -> str:
        return self.index.kb_hash

    def predict(self, texts, mention_ids, k):
        return query_sparse(self.index, texts, k, mention_ids=mention_ids)


@dataclass(frozen=True)
class DenseGenerator:
    index: DenseIndex
    provider: EmbeddingProvider
    name: str = "dense"

    @property
    def kb_hash(self) -> str:
        return self.index.kb_hash

    def predict(self, texts, mention_ids, k):
        return query_dense(self.index, self.provider, texts, k, mention_ids=mention_ids)


def generate_candidates(ds: Dataset, generators: Sequence[CandidateGenerator], k: int = DEFAULT_K,
                        kb: KnowledgeBase | None = None) -> dict[str, dict[str, CandidateList]]:
    """Run every generator over every mention of every split.

    Returns ``{mention_id: {generator name: CandidateList}}``. Mention ids
    must be unique across the dataset.
    """
    hashes = {g.kb_hash for g in generators}
    if kb is not None:
        hashes.add(kb.kb_hash)
    if len(hashes) > 1:
        raise KbMismatchError(f"indices and knowledge base disagree on kb_hash: {sorted(hashes)}")
    ids, texts = [], []
    seen: set[str] = set()
    for _, m in ds.mentions():
        if m.id in seen:
            raise ValueError(f"mention id {m.id!r} is not unique in the dataset")
        seen.add(m.id)
        ids.append(m.id)
        texts.append(m.text)
    out: dict[str, dict[str, CandidateList]] = {mid: {} for mid in ids}
    if not ids:
        return out
    for g in generators:
        for cl in g.predict(texts, ids, k):
            out[cl.mention_id][g.name] = cl
    return out


@dataclass
class FilterStats:
    unknown_type: int = 0
    removed: int = 0


def filter_by_semantic_group(cl: CandidateList, mention_type: str | None, kb: KnowledgeBase,
                             type_to_group: Mapping[str, str | Sequence[str]],
                             stats: FilterStats | None = None) -> CandidateList:
    """Drop candidates none of whose semantic types fall into the mention's group(s).

    ``type_to_group`` maps an entity type to one group or a list of groups.
    Unknown entity types leave the list untouched and bump ``stats.unknown_type``.
    """
    wanted = type_to_group.get(mention_type) if mention_type is not None else None
    if wanted is None:
        if stats is not None:
            stats.unknown_type += 1
        logger.debug("no semantic group for entity type %r; not filtering", mention_type)
        return cl
    groups = {wanted} if isinstance(wanted, str) else set(wanted)
    kept = tuple(c for c in cl.candidates if c.concept_id in kb and kb.groups_of(c.concept_id) & groups)
    if stats is not None:
        stats.removed += len(cl.candidates) - len(kept)
    return replace(cl, candidates=kept)


def link_candidates(per_generator: Mapping[str, CandidateList], k: int = DEFAULT_K,
                    mention_type: str | None = None, kb: KnowledgeBase | None = None,
                    type_to_group: Mapping[str, str] | None = None,
                    stats: FilterStats | None = None) -> CandidateList:
    """Ensemble, optionally type-filter, then truncate to ``k``."""
    lists = list(per_generator.values())
    merged = lists[0] if len(lists) == 1 else ensemble_merge(lists)
    if type_to_group is not None and kb is not None:
        merged = filter_by_semantic_group(merged, mention_type, kb, type_to_group, stats)
    return truncate(merged, k)


def _expand_document(doc: Document) -> Document:
    pairs = find_abbreviations(doc.text)
    if not pairs:
        return doc
    mentions = tuple(replace(m, long_form=pairs[m.text]) if m.text in pairs else m for m in doc.mentions)
    return replace(doc, mentions=mentions)


def expand_abbreviations(ds: Dataset) -> Dataset:
    """Set ``long_form`` on every mention whose text is a short form defined in its document."""
    return Dataset({name: tuple(_expand_document(d) for d in docs) for name, docs in ds.splits.items()})
