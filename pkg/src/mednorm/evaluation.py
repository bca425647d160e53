"""Strict span-level evaluation of ranked concept predictions.

A gold unit is a ``(document, exact span set, concept)`` triple; a mention
with several gold concepts contributes one unit per concept. Predictions are
either ranked candidate lists, where the first concept is the prediction
unless it is NIL (abstention), or a dataset whose mentions carry a set of
predicted concepts. Recall@k counts gold units whose concept appears in the
top ``k`` of the prediction with the identical span set.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

from .candidates import NIL_ID, CandidateList
from .datamodel import Dataset
from .kb import KnowledgeBase


class DocumentMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    precision_at_1: float
    recall_at_1: float
    f1_at_1: float
    recall_at_k: dict[int, float]
    gold_pairs: int
    predicted_pairs: int
    true_positives: int
    breakdowns: dict[str, dict[int, dict[str, int]]] = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "precision_at_1": self.precision_at_1,
            "recall_at_1": self.recall_at_1,
            "f1_at_1": self.f1_at_1,
            "recall_at_k": {str(k): v for k, v in sorted(self.recall_at_k.items())},
            "counts": {"gold_pairs": self.gold_pairs, "predicted_pairs": self.predicted_pairs,
                       "true_positives": self.true_positives},
        }
        if self.breakdowns:
            out["breakdowns"] = {name: {str(b): row for b, row in sorted(t.items())} for name, t in self.breakdowns.items()}
        return out

    def to_text(self) -> str:
        rows = [("metric", "value"),
                ("P@1", f"{self.precision_at_1:.4f}"),
                ("R@1", f"{self.recall_at_1:.4f}"),
                ("F1@1", f"{self.f1_at_1:.4f}")]
        rows += [(f"R@{k}", f"{v:.4f}") for k, v in sorted(self.recall_at_k.items()) if k != 1]
        rows += [("gold pairs", str(self.gold_pairs)), ("predicted pairs", str(self.predicted_pairs)),
                 ("true positives", str(self.true_positives))]
        w = max(len(a) for a, _ in rows)
        lines = [f"{a:<{w}}  {b:>8}" for a, b in rows]
        for name, table in self.breakdowns.items():
            lines.append("")
            lines.append(f"{name:<{w}}  {'total':>8}  {'tp@1':>8}")
            for bucket, row in sorted(table.items()):
                lines.append(f"{bucket:<{w}}  {row['total']:>8}  {row['tp']:>8}")
        return "\n".join(lines)


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _score(gold: Mapping[Hashable, Sequence[str]], tiers: Mapping[Hashable, Sequence[Sequence[str]]],
           ks: Iterable[int]) -> EvalReport:
    gold_units = {(key, cid) for key, cids in gold.items() for cid in cids}
    predicted = {(key, cid) for key, t in tiers.items() if t for cid in t[0] if cid != NIL_ID}
    tp = len(gold_units & predicted)
    p = tp / len(predicted) if predicted else 0.0
    r = tp / len(gold_units) if gold_units else 0.0
    recall_at_k = {}
    for k in sorted(set(ks) | {1}):
        hits = sum(1 for key, cid in gold_units if any(cid in tier for tier in tiers.get(key, ())[:k]))
        recall_at_k[k] = hits / len(gold_units) if gold_units else 0.0
    return EvalReport(p, r, _f1(p, r), recall_at_k, len(gold_units), len(predicted), tp)


def score_rankings(gold: Mapping[Hashable, Sequence[str]], ranked: Mapping[Hashable, Sequence[str]],
                   ks: Iterable[int] = (1,)) -> EvalReport:
    """Core metric computation over arbitrary mention keys.

    ``gold`` maps a mention key to its gold concept ids; ``ranked`` maps a
    key to predicted concept ids in rank order (``NIL`` first marks abstention).
    """
    return _score(gold, {key: [[cid] for cid in ids] for key, ids in ranked.items()}, ks)


def _ids(cl: CandidateList | Sequence[str]) -> list[str]:
    return cl.concept_ids if isinstance(cl, CandidateList) else list(cl)


def f1_at_1(gold: Mapping[str, Sequence[str]], ranked: Mapping[str, CandidateList | Sequence[str]]) -> float:
    return score_rankings(gold, {k: _ids(v) for k, v in ranked.items()}).f1_at_1


def _keyed(ds: Dataset, split: str | None) -> tuple[dict, dict, set]:
    """Concept ids per span key, mention id to span key, and the set of documents."""
    concepts: dict = defaultdict(list)
    key_of: dict = {}
    docs = set()
    for name, d in ((n, d) for n, docs_ in ds.splits.items() if split is None or n == split for d in docs_):
        docs.add((name, d.id))
        for m in d.mentions:
            key = (name, d.id, tuple(m.spans))
            concepts[key].extend(r.db_id for r in m.gold_concepts)
            key_of[m.id] = key
    return concepts, key_of, docs


Predictions = Dataset | Mapping[str, CandidateList]


def _prediction_tiers(gold: Dataset, predicted: Predictions, split: str | None) -> tuple[dict, dict]:
    """Gold concepts per span key and predicted rank tiers per span key.

    A predicted dataset is a set prediction: all concepts of a mention share
    rank 1, as gold multi-normalizations do. Candidate lists, keyed by
    mention id, are rankings with one concept per rank.
    """
    gold_concepts, key_of, gold_docs = _keyed(gold, split)
    if isinstance(predicted, Dataset):
        pred_concepts, _, pred_docs = _keyed(predicted, split)
        if gold_docs != pred_docs:
            missing = sorted(gold_docs ^ pred_docs)[:5]
            raise DocumentMismatchError(f"gold and predicted documents differ, e.g. {missing}")
        tiers = {key: [list(dict.fromkeys(ids))] for key, ids in pred_concepts.items() if ids}
        return gold_concepts, tiers
    _, all_keys, _ = _keyed(gold, None)
    unknown = sorted(set(predicted) - set(all_keys))
    if unknown:
        raise DocumentMismatchError(f"predictions for mentions not in the gold dataset, e.g. {unknown[:5]}")
    tiers = {key_of[mid]: [[cid] for cid in _ids(cl)] for mid, cl in predicted.items() if mid in key_of}
    return gold_concepts, tiers


def evaluate(gold: Dataset, predicted: Predictions, ks: Iterable[int] = (1,), split: str | None = None) -> EvalReport:
    """Score ``predicted`` against ``gold``.

    ``predicted`` is either a dataset with the same documents, whose mentions
    carry predicted concepts, or a mapping from gold mention id to ranked
    candidates.
    """
    gold_concepts, tiers = _prediction_tiers(gold, predicted, split)
    return _score(gold_concepts, tiers, ks)


def shared_alias_bucket(gold_id: str, candidate_ids: Sequence[str], kb: KnowledgeBase) -> int:
    """0 when the gold concept was not retrieved; else the largest number of
    (case-insensitive) aliases another candidate shares with it, at least 1."""
    if gold_id not in candidate_ids:
        return 0
    gold_aliases = {a.value.casefold() for a in kb[gold_id].aliases} if gold_id in kb else set()
    shared = 0
    for cid in candidate_ids:
        if cid == gold_id or cid == NIL_ID or cid not in kb:
            continue
        shared = max(shared, len(gold_aliases & {a.value.casefold() for a in kb[cid].aliases}))
    return max(1, shared)


def error_breakdown(gold: Dataset, predicted: Predictions, kb: KnowledgeBase,
                    split: str | None = None) -> dict[str, dict[int, dict[str, int]]]:
    """True positives at k=1 by mention length (whitespace tokens) and shared-alias count."""
    gold_concepts, tiers = _prediction_tiers(gold, predicted, split)
    texts = {}
    for name, docs in gold.splits.items():
        if split is not None and name != split:
            continue
        for d in docs:
            for m in d.mentions:
                texts[(name, d.id, tuple(m.spans))] = m.text
    by_len: dict[int, dict[str, int]] = defaultdict(lambda: {"total": 0, "tp": 0})
    by_shared: dict[int, dict[str, int]] = defaultdict(lambda: {"total": 0, "tp": 0})
    for key, cids in gold_concepts.items():
        t = tiers.get(key, [])
        top = set(t[0]) - {NIL_ID} if t else set()
        retrieved = [cid for tier in t for cid in tier if cid != NIL_ID]
        length = len(texts[key].split())
        for cid in dict.fromkeys(cids):
            tp = int(cid in top)
            bucket = shared_alias_bucket(cid, retrieved, kb)
            for table, b in ((by_len, length), (by_shared, bucket)):
                table[b]["total"] += 1
                table[b]["tp"] += tp
    return {"mention_length": dict(by_len), "shared_aliases": dict(by_shared)}


def report_json(report: EvalReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=True)
