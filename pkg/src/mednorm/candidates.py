"""Ranked candidate lists and their JSONL dump format."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

NIL_ID = "NIL"
SOURCES = ("sparse", "dense", "ensemble", "reranker")

# Retrieval scores are rounded to this many decimals so that ties are decided
# by concept id rather than by floating point noise.
SCORE_DECIMALS = 12


def quantize(score: float) -> float:
    return round(float(score), SCORE_DECIMALS) + 0.0


@dataclass(frozen=True)
class Candidate:
    concept_id: str
    score: float
    source: str = "sparse"


def rank_key(c: Candidate) -> tuple[float, str]:
    return (-c.score, c.concept_id)


@dataclass(frozen=True)
class CandidateList:
    mention_id: str
    candidates: tuple[Candidate, ...] = ()
    abstain: bool = False

    def __post_init__(self):
        ids = [c.concept_id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate concept ids in candidates for {self.mention_id!r}")
        if any(rank_key(a) > rank_key(b) for a, b in zip(self.candidates, self.candidates[1:])):
            raise ValueError(f"candidates for {self.mention_id!r} are not sorted by (score desc, id asc)")

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    @property
    def concept_ids(self) -> list[str]:
        return [c.concept_id for c in self.candidates]

    @property
    def top(self) -> Candidate | None:
        return self.candidates[0] if self.candidates else None

    @classmethod
    def from_candidates(cls, mention_id: str, candidates: Iterable[Candidate], abstain: bool = False) -> "CandidateList":
        return cls(mention_id, tuple(sorted(candidates, key=rank_key)), abstain)


def truncate(cl: CandidateList, k: int) -> CandidateList:
    return replace(cl, candidates=cl.candidates[:k])


def ensemble_merge(lists: Sequence[CandidateList]) -> CandidateList:
    """Union of candidate lists keeping each concept's maximum raw score."""
    if not lists:
        raise ValueError("nothing to merge")
    mention_id = lists[0].mention_id
    best: dict[str, float] = {}
    for cl in lists:
        if cl.mention_id != mention_id:
            raise ValueError(f"cannot merge candidates of {cl.mention_id!r} into {mention_id!r}")
        for c in cl.candidates:
            if c.concept_id not in best or c.score > best[c.concept_id]:
                best[c.concept_id] = c.score
    return CandidateList.from_candidates(mention_id, (Candidate(cid, s, "ensemble") for cid, s in best.items()))


def candidates_to_json(cl: CandidateList) -> dict:
    return {
        "mention_id": cl.mention_id,
        "candidates": [{"concept_id": c.concept_id, "score": c.score, "source": c.source} for c in cl.candidates],
        "abstain": cl.abstain,
    }


def candidates_from_json(obj: Mapping) -> CandidateList:
    cands = tuple(Candidate(str(c["concept_id"]), float(c["score"]), c.get("source", "sparse")) for c in obj["candidates"])
    return CandidateList(str(obj["mention_id"]), cands, bool(obj.get("abstain", False)))


def dump_candidates(lists: Iterable[CandidateList], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for cl in lists:
            f.write(json.dumps(candidates_to_json(cl), ensure_ascii=False) + "\n")


def load_candidates(path: str | Path) -> dict[str, CandidateList]:
    out: dict[str, CandidateList] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                cl = candidates_from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ValueError(f"{path}:{lineno}: malformed candidate record ({e})") from None
            out[cl.mention_id] = cl
    return out
