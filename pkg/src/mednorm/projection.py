"""Marker-based label projection through machine translation.

Mentions are wrapped in square brackets, the marked text is translated, and
mention spans are read back from the surviving brackets. Brackets already
present in the source are escaped with a backslash. A document whose
markers come back unbalanced or in the wrong number loses all entities of
that pass; labels are never re-aligned by guesswork.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .datamodel import Dataset, Document, Mention, Passage
from .remote import map_batches, post_json

Translate = Callable[[str], str]
ENDPOINT_ENV = "MEDNORM_TRANSLATION_URL"


@dataclass(frozen=True)
class MarkedText:
    text: str
    origin_mention_ids: tuple[str, ...]
    escaped: int = 0


@dataclass(frozen=True)
class RecoveredText:
    text: str
    spans: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class RecoveryFailure:
    reason: str  # "unbalanced" | "nested" | "count mismatch" | "empty mention"
    detail: str = ""


@dataclass
class LossReport:
    entities_in: int = 0
    entities_out: int = 0
    failed_documents: list[tuple[str, str]] = field(default_factory=list)

    @property
    def lost(self) -> int:
        return self.entities_in - self.entities_out

    @property
    def loss_percent(self) -> float:
        return 100.0 * self.lost / self.entities_in if self.entities_in else 0.0

    def to_json(self) -> dict:
        return {"entities_in": self.entities_in, "entities_out": self.entities_out,
                "loss_percent": self.loss_percent,
                "failed_documents": [list(x) for x in self.failed_documents]}


def _escape(s: str) -> tuple[str, int]:
    n = sum(s.count(c) for c in "\\[]")
    return s.replace("\\", "\\\\").replace("[", "\\[").replace("]", "\\]"), n


def insert_markers(doc: Document, mentions: Sequence[Mention] | None = None) -> MarkedText:
    """Wrap each (contiguous, non-overlapping) mention as ``[mention]``."""
    mentions = sorted(doc.mentions if mentions is None else mentions, key=lambda m: (m.start, m.end))
    text = doc.text
    parts, pos, escaped = [], 0, 0
    for m in mentions:
        if len(m.spans) != 1:
            raise ValueError(f"mention {m.id!r} is discontiguous")
        s, e = m.spans[0]
        if s < pos:
            raise ValueError(f"mention {m.id!r} overlaps a previous mention")
        for chunk, wrap in ((text[pos:s], False), (text[s:e], True)):
            esc, n = _escape(chunk)
            escaped += n
            parts.append(f"[{esc}]" if wrap else esc)
        pos = e
    esc, n = _escape(text[pos:])
    parts.append(esc)
    return MarkedText("".join(parts), tuple(m.id for m in mentions), escaped + n)


def recover_spans(translated: str, expected_pairs: int) -> RecoveredText | RecoveryFailure:
    out: list[str] = []
    spans: list[tuple[int, int]] = []
    open_at: int | None = None
    i = 0
    while i < len(translated):
        ch = translated[i]
        if ch == "\\" and i + 1 < len(translated):
            out.append(translated[i + 1])
            i += 2
            continue
        if ch == "[":
            if open_at is not None:
                return RecoveryFailure("nested", f"'[' at {i} inside an open marker")
            open_at = len(out)
        elif ch == "]":
            if open_at is None:
                return RecoveryFailure("unbalanced", f"']' at {i} without '['")
            spans.append((open_at, len(out)))
            open_at = None
        else:
            out.append(ch)
        i += 1
    if open_at is not None:
        return RecoveryFailure("unbalanced", "unclosed '['")
    if len(spans) != expected_pairs:
        return RecoveryFailure("count mismatch", f"expected {expected_pairs} marker pairs, found {len(spans)}")
    text = "".join(out)
    trimmed = []
    for s, e in spans:
        while s < e and text[s].isspace():
            s += 1
        while e > s and text[e - 1].isspace():
            e -= 1
        if s == e:
            return RecoveryFailure("empty mention", f"marker pair {len(trimmed)} encloses no text")
        trimmed.append((s, e))
    return RecoveredText(text, tuple(trimmed))


def _passes(mentions: Sequence[Mention]) -> list[list[Mention]]:
    """Split contiguous mentions into groups without overlaps (first-fit by start offset)."""
    groups: list[list[Mention]] = []
    for m in sorted(mentions, key=lambda m: (m.start, m.end, m.id)):
        for g in groups:
            if g[-1].end <= m.start:
                g.append(m)
                break
        else:
            groups.append([m])
    return groups


def _recover(doc: Document, group: Sequence[Mention], translate: Translate) -> tuple[MarkedText, RecoveredText | RecoveryFailure]:
    marked = insert_markers(doc, group)
    try:
        return marked, recover_spans(translate(marked.text), len(group))
    except Exception as e:  # transport errors count as loss
        return marked, RecoveryFailure("translate error", str(e))


def _project_document(doc: Document, translate: Translate,
                      salvage: bool = False) -> tuple[Document | None, int, str | None]:
    contiguous = [m for m in doc.mentions if len(m.spans) == 1]
    failures = []
    if len(contiguous) < len(doc.mentions):
        failures.append("discontiguous mention(s) dropped")
    groups = _passes(contiguous) or [[]]
    target_text: str | None = None
    projected: list[Mention] = []
    for i, group in enumerate(groups):
        attempts = [(group, *_recover(doc, group, translate))]
        if isinstance(attempts[0][2], RecoveryFailure) and salvage and len(group) > 1:
            # one marker pair per call; whatever comes back intact is kept
            failures.append(f"pass {i}: {attempts[0][2].reason}, salvaging")
            attempts = [([m], *_recover(doc, [m], translate)) for m in group]
        for sub, marked, result in attempts:
            if isinstance(result, RecoveryFailure):
                failures.append(f"pass {i}: {result.reason}")
                continue
            if target_text is None:
                target_text = result.text
            elif result.text != target_text:
                failures.append(f"pass {i}: translation diverged from first pass")
                continue
            by_id = {m.id: m for m in sub}
            for mid, (s, e) in zip(marked.origin_mention_ids, result.spans):
                projected.append(replace(by_id[mid], spans=((s, e),), text=result.text[s:e], long_form=None))
        if target_text is None:
            return None, 0, "; ".join(failures)
    projected.sort(key=lambda m: (m.start, m.end, m.id))
    out = Document(doc.id, (Passage(f"{doc.id}-p0", target_text or "", 0),), tuple(projected))
    return out, len(projected), "; ".join(failures) or None


def project_dataset(ds: Dataset, translate: Translate, max_workers: int = 1,
                    salvage: bool = False) -> tuple[Dataset, LossReport]:
    """Translate every document with marker projection and account for lost entities.

    With ``salvage`` a failed pass is retried one mention at a time instead
    of losing all of its mentions.
    """
    report = LossReport()
    splits = {}
    for name, docs in ds.splits.items():
        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                results = list(pool.map(lambda d: _project_document(d, translate, salvage), docs))
        else:
            results = [_project_document(d, translate, salvage) for d in docs]
        kept = []
        for doc, (out, n_out, failure) in zip(docs, results):
            report.entities_in += len(doc.mentions)
            report.entities_out += n_out
            if failure:
                report.failed_documents.append((doc.id, failure))
            if out is not None:
                kept.append(out)
        splits[name] = tuple(kept)
    return Dataset(splits), report


class RemoteTranslator:
    """Translation service answering ``{"texts": [...]}`` with ``{"texts": [...]}``."""

    def __init__(self, endpoint: str | None = None, batch_size: int = 16, max_in_flight: int = 4,
                 retries: int = 3, timeout: float = 60.0):
        endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise ValueError(f"no endpoint given and ${ENDPOINT_ENV} is unset")
        self.endpoint = endpoint
        self.batch_size = batch_size
        self.max_in_flight = max_in_flight
        self.retries = retries
        self.timeout = timeout

    def _batch(self, texts: Sequence[str]) -> list[str]:
        return post_json(self.endpoint, {"texts": list(texts)}, timeout=self.timeout, retries=self.retries)["texts"]

    def translate_batch(self, texts: Sequence[str]) -> list[str]:
        return map_batches(self._batch, list(texts), self.batch_size, self.max_in_flight)

    def __call__(self, text: str) -> str:
        return self._batch([text])[0]


def loss_report_json(report: LossReport) -> str:
    return json.dumps(report.to_json(), indent=2)
