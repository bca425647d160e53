"""Trainable re-ranking of generated candidates with a rank-regularized softmax loss.

For one mention with ``k`` candidate slots (the last being a synthetic NIL
concept) the scorer assigns logits ``s``. Training minimizes::

    loss = -s[gold] + logsumexp(s) + lambda * ||s - c||_2

where ``c`` holds the candidate generator's scores (0 for NIL). The second
term keeps the learned ranking close to the generator's.

The built-in scorer is linear in a small, versioned feature set, which
keeps the objective convex and the gradients checkable. External neural
scorers can consume the serialized mention and concept strings produced
by :func:`encode_mention` and :func:`encode_concept`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .candidates import NIL_ID, Candidate, CandidateList, rank_key
from .datamodel import Dataset, Document, Mention
from .kb import Concept, KnowledgeBase
from .sparse import char_ngrams

logger = logging.getLogger(__name__)

FEATURE_VERSION = 1
FEATURE_NAMES = (
    "cg_score",
    "reciprocal_rank",
    "trigram_jaccard",
    "exact_match",
    "group_match",
    "log_alias_count",
    "context_overlap",
    "nil",
)
CG_FEATURE = FEATURE_NAMES.index("cg_score")
NIL_FEATURE = FEATURE_NAMES.index("nil")
NIL_ENCODING = "[UNK]"

_WORD = re.compile(r"\w{3,}")


class NonFiniteError(FloatingPointError):
    pass


class FeatureVersionError(ValueError):
    pass


# -- encodings -------------------------------------------------------------


@dataclass(frozen=True)
class MentionEncoding:
    serialized: str
    ctx_left: str
    ctx_right: str
    ctx_len: int


@dataclass(frozen=True)
class ConceptEncoding:
    serialized: str


def encode_mention(doc: Document, mention: Mention, ctx_len: int = 128) -> MentionEncoding:
    """``[CLS] ctx_l [START] mention [END] ctx_r`` with ``ctx_len`` characters per side."""
    text = doc.text
    start, end = mention.start, mention.end
    left = text[max(0, start - ctx_len):start].strip() if ctx_len > 0 else ""
    right = text[end:end + ctx_len].strip() if ctx_len > 0 else ""
    surface = mention.text if mention.long_form is None else f"{mention.text} ({mention.long_form})"
    parts = ["[CLS]", left, "[START]", surface, "[END]", right]
    return MentionEncoding(" ".join(p for p in parts if p), left, right, ctx_len)


def encode_concept(concept: Concept | None) -> ConceptEncoding:
    """``type [TYPE] canonical [TITLE] alias1 [SEP] ... [SEP] aliasN``; ``None`` encodes NIL."""
    if concept is None:
        return ConceptEncoding(NIL_ENCODING)
    if not concept.aliases:
        raise ValueError(f"concept {concept.concept_id!r} has no aliases")
    others: list[str] = []
    for a in concept.aliases:
        if a.value != concept.canonical_name and a.value not in others:
            others.append(a.value)
    head = f"{concept.semantic_types[0]} [TYPE] " if concept.semantic_types else "[TYPE] "
    s = f"{head}{concept.canonical_name} [TITLE]"
    if others:
        s += " " + " [SEP] ".join(others)
    return ConceptEncoding(s)


# -- configuration and parameters -----------------------------------------


@dataclass(frozen=True)
class RerankerConfig:
    k: int = 64
    lam: float = 1.0
    learning_rate: float = 1e-2
    epochs: int = 20
    ctx_len: int = 128
    seed: int = 42
    max_grad_norm: float | None = 1.0
    init: str = "cg"  # "cg" | "zeros"
    cg_scale: float = 1.0
    type_to_group: Mapping[str, str] | None = None

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2 (one candidate slot plus NIL)")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.init not in ("cg", "zeros"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class ScorerParams:
    weights: np.ndarray
    bias: float = 0.0
    feature_version: int = FEATURE_VERSION

    def __post_init__(self):
        if len(self.weights) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} weights, got {len(self.weights)}")
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise NonFiniteError("parameters must be finite")

    def to_vector(self) -> np.ndarray:
        return np.append(np.asarray(self.weights, dtype=np.float64), self.bias)

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "ScorerParams":
        return cls(np.array(v[:-1], dtype=np.float64), float(v[-1]))

    @classmethod
    def cg_only(cls, scale: float = 1.0) -> "ScorerParams":
        w = np.zeros(len(FEATURE_NAMES))
        w[CG_FEATURE] = scale
        return cls(w, 0.0)

    @classmethod
    def zeros(cls) -> "ScorerParams":
        return cls(np.zeros(len(FEATURE_NAMES)), 0.0)


# -- features and batches --------------------------------------------------


def _trigrams(s: str) -> set[str]:
    return set(char_ngrams(s, 3))


def _jaccard(a: set[str], b: set[str]) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 0.0


@dataclass(frozen=True)
class TrainingBatch:
    mention_id: str
    concept_ids: tuple[str, ...]  # NIL last
    features: np.ndarray  # k x n_features
    cg_scores: np.ndarray  # k
    gold_index: int | None = None
    mention_encoding: str = ""

    def __post_init__(self):
        k = len(self.concept_ids)
        if self.concept_ids.count(NIL_ID) != 1 or self.concept_ids[-1] != NIL_ID:
            raise ValueError("a batch holds exactly one NIL candidate, in the last slot")
        if self.features.shape != (k, len(FEATURE_NAMES)) or self.cg_scores.shape != (k,):
            raise ValueError("feature/score shapes do not match the candidate count")
        if self.gold_index is not None and not 0 <= self.gold_index < k:
            raise ValueError(f"gold index {self.gold_index} outside [0, {k})")

    @property
    def k(self) -> int:
        return len(self.concept_ids)

    @property
    def nil_index(self) -> int:
        return self.k - 1


def candidate_features(doc: Document, mention: Mention, candidates: Sequence[Candidate], kb: KnowledgeBase,
                       ctx_len: int = 128, type_to_group: Mapping[str, str] | None = None) -> np.ndarray:
    """Feature rows for ``candidates`` followed by one row for NIL."""
    surfaces = [mention.text] + ([mention.long_form] if mention.long_form else [])
    surface_grams = [_trigrams(s) for s in surfaces]
    lowered = {s.lower() for s in surfaces}
    enc = encode_mention(doc, mention, ctx_len)
    mention_words = {w for s in surfaces for w in _WORD.findall(s.lower())}
    ctx_words = set(_WORD.findall(f"{enc.ctx_left} {enc.ctx_right}".lower())) - mention_words
    if mention.entity_type is None:
        group = None
    elif type_to_group is None:
        group = mention.entity_type
    else:
        group = type_to_group.get(mention.entity_type)

    rows = np.zeros((len(candidates) + 1, len(FEATURE_NAMES)))
    for i, cand in enumerate(candidates):
        row = rows[i]
        row[0] = cand.score
        row[1] = 1.0 / (i + 1)
        concept = kb.concepts.get(cand.concept_id)
        if concept is None:
            continue
        aliases = concept.alias_values()
        row[2] = max((_jaccard(g, _trigrams(a)) for a in aliases for g in surface_grams), default=0.0)
        row[3] = float(any(a.lower() in lowered for a in aliases))
        row[4] = float(group is not None and group in kb.groups_of(concept.concept_id))
        row[5] = math.log1p(len(aliases))
        alias_words = {w for a in aliases for w in _WORD.findall(a.lower())}
        row[6] = math.log1p(len(alias_words & ctx_words))
    rows[-1, NIL_FEATURE] = 1.0
    return rows


def make_batch(doc: Document, mention: Mention, cl: CandidateList, kb: KnowledgeBase, cfg: RerankerConfig,
               gold_id: str | None = None) -> TrainingBatch:
    """Build a batch from the first ``k - 1`` candidates plus NIL.

    A gold concept missing from the candidates is mapped to the NIL slot.
    """
    cands = [c for c in cl.candidates if c.concept_id != NIL_ID][:cfg.k - 1]
    ids = tuple(c.concept_id for c in cands) + (NIL_ID,)
    feats = candidate_features(doc, mention, cands, kb, cfg.ctx_len, cfg.type_to_group)
    c = np.array([cfg.cg_scale * x.score for x in cands] + [0.0])
    gold = None
    if gold_id is not None:
        gold = ids.index(gold_id) if gold_id in ids[:-1] else len(ids) - 1
    return TrainingBatch(mention.id, ids, feats, c, gold, encode_mention(doc, mention, cfg.ctx_len).serialized)


# -- scoring and loss ------------------------------------------------------


def score_candidates(params: ScorerParams, batch: TrainingBatch) -> np.ndarray:
    return batch.features @ params.weights + params.bias


def _logsumexp(s: np.ndarray) -> float:
    m = float(np.max(s))
    return m + math.log(float(np.sum(np.exp(s - m))))


def loss_terms(params: ScorerParams, batch: TrainingBatch) -> tuple[float, float]:
    """``(softmax loss, ||s - c||_2)`` for a batch with a gold index."""
    s = score_candidates(params, batch)
    return -float(s[batch.gold_index]) + _logsumexp(s), float(np.linalg.norm(s - batch.cg_scores))


def loss_and_grad(params: ScorerParams, batch: TrainingBatch, lam: float) -> tuple[float, np.ndarray]:
    """Rank-regularized softmax loss and its gradient w.r.t. ``[weights..., bias]``."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if batch.gold_index is None:
        raise ValueError(f"batch {batch.mention_id!r} has no gold index")
    s = score_candidates(params, batch)
    if not np.all(np.isfinite(s)):
        raise NonFiniteError(f"non-finite scores for {batch.mention_id!r}")
    lse = _logsumexp(s)
    loss = lse - float(s[batch.gold_index])
    g_s = np.exp(s - lse)
    g_s[batch.gold_index] -= 1.0
    if lam > 0:
        r = s - batch.cg_scores
        norm = float(np.linalg.norm(r))
        loss += lam * norm
        g_s = g_s + lam * r / max(norm, 1e-12)
    grad = np.append(batch.features.T @ g_s, g_s.sum())
    if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NonFiniteError(f"non-finite loss or gradient for {batch.mention_id!r}")
    return loss, grad


# -- training --------------------------------------------------------------


@dataclass(frozen=True)
class LinkItem:
    """A mention with its document and generated candidates."""

    doc: Document
    mention: Mention
    candidates: CandidateList


def collect_items(ds: Dataset, candidates: Mapping[str, CandidateList], split: str | None = None) -> list[LinkItem]:
    items = []
    for doc, m in ds.mentions(split):
        cl = candidates.get(m.id)
        if cl is None:
            raise KeyError(f"no candidates for mention {m.id!r}")
        items.append(LinkItem(doc, m, cl))
    return items


@dataclass
class EpochStats:
    epoch: int
    loss: float
    softmax_loss: float
    regularizer: float
    val_f1: float


@dataclass
class TrainingReport:
    epochs: list[EpochStats] = field(default_factory=list)
    initial_val_f1: float = 0.0
    best_epoch: int = 0
    n_batches: int = 0

    def to_json(self) -> dict:
        return {"epochs": [asdict(e) for e in self.epochs], "initial_val_f1": self.initial_val_f1,
                "best_epoch": self.best_epoch, "n_batches": self.n_batches}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()


def _training_batches(items: Iterable[LinkItem], kb: KnowledgeBase, cfg: RerankerConfig) -> list[TrainingBatch]:
    batches = []
    for it in items:
        for ref in it.mention.gold_concepts:
            batches.append(make_batch(it.doc, it.mention, it.candidates, kb, cfg, gold_id=ref.db_id))
    return batches


def _mean_losses(params: ScorerParams, batches: Sequence[TrainingBatch], lam: float) -> tuple[float, float, float]:
    sm = reg = 0.0
    for b in batches:
        a, r = loss_terms(params, b)
        sm += a
        reg += r
    n = len(batches)
    total = sm + lam * reg if lam > 0 else sm
    return total / n, sm / n, reg / n


def _clip(grad: np.ndarray, max_norm: float | None) -> np.ndarray:
    if max_norm is None:
        return grad
    norm = float(np.linalg.norm(grad))
    return grad * (max_norm / norm) if norm > max_norm else grad


def train_reranker(train: Sequence[LinkItem], val: Sequence[LinkItem], kb: KnowledgeBase,
                   cfg: RerankerConfig = RerankerConfig()) -> tuple[ScorerParams, TrainingReport]:
    """Per-mention gradient descent, keeping the epoch with the best validation F1@1.

    Mention order is reshuffled each epoch from ``cfg.seed``. Without a
    validation set, training F1@1 drives checkpoint selection.
    """
    from .evaluation import f1_at_1

    batches = _training_batches(train, kb, cfg)
    if not batches:
        raise ValueError("no training mentions with gold concepts")
    val_items = list(val) if val else list(train)
    val_batches = [(it, make_batch(it.doc, it.mention, it.candidates, kb, cfg)) for it in val_items]
    gold = {it.mention.id: [r.db_id for r in it.mention.gold_concepts] for it in val_items}

    def val_f1(p: ScorerParams) -> float:
        ranked = {it.mention.id: _rerank_batch(p, b, it.candidates.mention_id) for it, b in val_batches}
        return f1_at_1(gold, ranked)

    params = ScorerParams.cg_only(cfg.cg_scale) if cfg.init == "cg" else ScorerParams.zeros()
    rng = np.random.default_rng(cfg.seed)
    report = TrainingReport(initial_val_f1=val_f1(params), n_batches=len(batches))
    best: tuple[float, int, ScorerParams] | None = None
    theta = params.to_vector()
    for epoch in range(1, cfg.epochs + 1):
        for i in rng.permutation(len(batches)):
            _, grad = loss_and_grad(ScorerParams.from_vector(theta), batches[i], cfg.lam)
            theta = theta - cfg.learning_rate * _clip(grad, cfg.max_grad_norm)
        params = ScorerParams.from_vector(theta)
        total, sm, reg = _mean_losses(params, batches, cfg.lam)
        f1 = val_f1(params)
        report.epochs.append(EpochStats(epoch, total, sm, reg, f1))
        logger.info("epoch %d: loss %.6f (softmax %.6f, reg %.6f) val F1 %.4f", epoch, total, sm, reg, f1)
        if best is None or f1 > best[0]:
            best = (f1, epoch, params)
    if best is None:
        return params, report
    report.best_epoch = best[1]
    return best[2], report


# -- inference -------------------------------------------------------------


def _rerank_batch(params: ScorerParams, batch: TrainingBatch, mention_id: str) -> CandidateList:
    s = score_candidates(params, batch)
    real = [Candidate(cid, float(x), "reranker") for cid, x in zip(batch.concept_ids[:-1], s[:-1])]
    real.sort(key=rank_key)
    nil_score = float(s[-1])
    if not real or nil_score > real[0].score:
        return CandidateList(mention_id, (Candidate(NIL_ID, nil_score, "reranker"), *real), abstain=True)
    return CandidateList(mention_id, tuple(real))


def rerank(params: ScorerParams, cl: CandidateList, doc: Document, mention: Mention, kb: KnowledgeBase,
           cfg: RerankerConfig = RerankerConfig()) -> CandidateList:
    """Re-sort the first ``k - 1`` candidates by learned score.

    When NIL outscores every candidate the list is marked ``abstain`` and NIL
    is placed first.
    """
    if params.feature_version != FEATURE_VERSION:
        raise FeatureVersionError(f"model uses feature version {params.feature_version}, expected {FEATURE_VERSION}")
    return _rerank_batch(params, make_batch(doc, mention, cl, kb, cfg), cl.mention_id)


def rerank_items(params: ScorerParams, items: Iterable[LinkItem], kb: KnowledgeBase,
                 cfg: RerankerConfig = RerankerConfig()) -> dict[str, CandidateList]:
    return {it.mention.id: rerank(params, it.candidates, it.doc, it.mention, kb, cfg) for it in items}


# -- persistence -----------------------------------------------------------


def config_to_json(cfg: RerankerConfig) -> dict:
    d = asdict(cfg)
    d["lambda"] = d.pop("lam")
    if cfg.type_to_group is not None:
        d["type_to_group"] = dict(cfg.type_to_group)
    return d


def config_from_json(d: Mapping) -> RerankerConfig:
    d = dict(d)
    if "lambda" in d:
        d["lam"] = d.pop("lambda")
    return RerankerConfig(**d)


def save_model(path: str | Path, params: ScorerParams, cfg: RerankerConfig, report: TrainingReport | None = None) -> None:
    obj = {
        "feature_version": params.feature_version,
        "feature_names": list(FEATURE_NAMES),
        "weights": [float(w) for w in params.weights],
        "bias": float(params.bias),
        "config": config_to_json(cfg),
        "train_report_digest": report.digest() if report is not None else None,
    }
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> tuple[ScorerParams, RerankerConfig]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("feature_version") != FEATURE_VERSION:
        raise FeatureVersionError(f"{path}: feature version {obj.get('feature_version')} != {FEATURE_VERSION}")
    params = ScorerParams(np.array(obj["weights"], dtype=np.float64), float(obj["bias"]), obj["feature_version"])
    return params, config_from_json(obj["config"])
