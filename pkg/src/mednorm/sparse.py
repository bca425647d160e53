"""TF-IDF over character n-grams of KB aliases, with exact cosine top-k retrieval.

Each alias is lowercased and padded with one space on both sides before
n-gram extraction, so n-grams at word boundaries differ from inner ones.
Term frequencies are raw counts and document frequencies are counted over
alias rows: ``idf = ln((1 + N) / (1 + df)) + 1``. Rows are L2-normalized.

On-disk layout (all arrays are ``.npy`` with explicit little-endian dtypes)::

    manifest.json     format_version, kind, params, kb_hash, shapes
    vocab.json        n-grams in column order
    idf.npy           <f8[V]
    data.npy          <f8[nnz]   CSC values of the (rows x V) matrix
    indices.npy       <i4[nnz]   row index of each value
    indptr.npy        <i8[V + 1] column pointers
    concepts.json     sorted unique concept ids
    row_concept.npy   <i4[N]     concept position of every row
    aliases.json      alias string of every row
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from .candidates import Candidate, CandidateList, quantize
from .kb import KnowledgeBase

FORMAT_VERSION = 1
KIND = "tfidf_ngram"


class IndexFormatError(ValueError):
    """Raised for malformed, empty or mismatched indices."""


def char_ngrams(text: str, n: int = 3, lowercase: bool = True) -> list[str]:
    s = f" {text.lower() if lowercase else text} "
    return [s[i:i + n] for i in range(len(s) - n + 1)]


@dataclass(frozen=True)
class SparseIndex:
    vocabulary: dict[str, int]
    idf: np.ndarray
    matrix: sparse.csr_matrix  # rows x vocab, L2-normalized rows
    concept_ids: list[str]
    row_concept: np.ndarray
    aliases: list[str]
    kb_hash: str
    params: dict = field(default_factory=lambda: {"n": 3, "lowercase": True})

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def vectorize(self, texts: Sequence[str]) -> sparse.csr_matrix:
        """TF-IDF rows for arbitrary strings; unknown n-grams are dropped."""
        n, lower = self.params["n"], self.params["lowercase"]
        indptr, indices, data = [0], [], []
        for t in texts:
            counts = Counter(g for g in char_ngrams(t, n, lower) if g in self.vocabulary)
            items = sorted((self.vocabulary[g], c) for g, c in counts.items())
            cols = [i for i, _ in items]
            vals = np.array([c for _, c in items], dtype=np.float64) * self.idf[cols]
            norm = np.linalg.norm(vals)
            if norm > 0:
                vals = vals / norm
            indices.extend(cols)
            data.extend(vals.tolist())
            indptr.append(len(indices))
        return sparse.csr_matrix((np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64),
                                  np.asarray(indptr, dtype=np.int64)), shape=(len(texts), len(self.vocabulary)))

    def query(self, mentions: Sequence[str], k: int, mention_ids: Sequence[str] | None = None,
              batch_size: int = 512) -> list[CandidateList]:
        return query_sparse(self, mentions, k, mention_ids=mention_ids, batch_size=batch_size)


def build_sparse_index(kb: KnowledgeBase, n: int = 3, lowercase: bool = True) -> SparseIndex:
    rows = kb.alias_rows()
    if not rows:
        raise IndexFormatError("cannot index an empty knowledge base")
    grams = [Counter(char_ngrams(alias, n, lowercase)) for alias, _ in rows]
    vocab_list = sorted(set().union(*grams))
    vocabulary = {g: i for i, g in enumerate(vocab_list)}
    df = np.zeros(len(vocab_list), dtype=np.float64)
    for counts in grams:
        for g in counts:
            df[vocabulary[g]] += 1
    n_rows = len(rows)
    idf = np.log((1.0 + n_rows) / (1.0 + df)) + 1.0

    indptr, indices, data = [0], [], []
    for counts in grams:
        cols = sorted(vocabulary[g] for g in counts)
        vals = np.array([counts[vocab_list[c]] for c in cols], dtype=np.float64) * idf[cols]
        norm = np.linalg.norm(vals)
        if norm > 0:
            vals /= norm
        indices.extend(cols)
        data.extend(vals.tolist())
        indptr.append(len(indices))
    matrix = sparse.csr_matrix((np.asarray(data), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
                               shape=(n_rows, len(vocab_list)))

    concept_ids = sorted({cid for _, cid in rows})
    pos = {cid: i for i, cid in enumerate(concept_ids)}
    row_concept = np.array([pos[cid] for _, cid in rows], dtype=np.int32)
    return SparseIndex(vocabulary, idf, matrix, concept_ids, row_concept, [a for a, _ in rows], kb.kb_hash,
                       {"n": n, "lowercase": lowercase})


def top_k_by_concept(sims: np.ndarray, row_concept: np.ndarray, concept_ids: Sequence[str], k: int,
                     source: str, keep_nonpositive: bool) -> list[Candidate]:
    """Per-concept maximum of row similarities, ranked by (score desc, concept id asc)."""
    best = np.full(len(concept_ids), -np.inf)
    np.maximum.at(best, row_concept, sims)
    scores = np.array([quantize(s) for s in best]) if len(best) else best
    mask = np.isfinite(scores) if keep_nonpositive else scores > 0
    idx = np.nonzero(mask)[0]
    # concept_ids are sorted, so position order is concept id order
    order = idx[np.lexsort((idx, -scores[idx]))][:k]
    return [Candidate(concept_ids[i], float(scores[i]), source) for i in order]


def query_sparse(index: SparseIndex, mentions: Sequence[str], k: int,
                 mention_ids: Sequence[str] | None = None, batch_size: int = 512) -> list[CandidateList]:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if mention_ids is None:
        mention_ids = [str(i) for i in range(len(mentions))]
    out: list[CandidateList] = []
    matrix_t = index.matrix.T.tocsr()
    for start in range(0, len(mentions), batch_size):
        q = index.vectorize(mentions[start:start + batch_size])
        sims = (q @ matrix_t).toarray()
        for j, row in enumerate(sims):
            row = np.minimum(row, 1.0)
            cands = top_k_by_concept(row, index.row_concept, index.concept_ids, k, "sparse", keep_nonpositive=False)
            out.append(CandidateList(mention_ids[start + j], tuple(cands)))
    return out


def manifest(index: SparseIndex) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": KIND,
        "params": {**index.params, "padding": " ", "tf": "raw count",
                   "idf": "ln((1+N)/(1+df))+1", "norm": "l2"},
        "kb_hash": index.kb_hash,
        "n_rows": index.n_rows,
        "vocab_size": len(index.vocabulary),
    }


def save_sparse_index(index: SparseIndex, directory: str | Path, extra_manifest: dict | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    csc = index.matrix.tocsc()
    csc.sort_indices()
    np.save(d / "idf.npy", index.idf.astype("<f8"))
    np.save(d / "data.npy", csc.data.astype("<f8"))
    np.save(d / "indices.npy", csc.indices.astype("<i4"))
    np.save(d / "indptr.npy", csc.indptr.astype("<i8"))
    np.save(d / "row_concept.npy", index.row_concept.astype("<i4"))
    vocab = sorted(index.vocabulary, key=index.vocabulary.get)
    for name, obj in (("vocab.json", vocab), ("concepts.json", index.concept_ids), ("aliases.json", index.aliases)):
        (d / name).write_text(json.dumps(obj, ensure_ascii=False), encoding="utf-8")
    m = {**manifest(index), **(extra_manifest or {})}
    (d / "manifest.json").write_text(json.dumps(m, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_sparse_index(directory: str | Path) -> SparseIndex:
    d = Path(directory)
    m = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    if m.get("kind") != KIND:
        raise IndexFormatError(f"{d} is not a {KIND} index (kind={m.get('kind')!r})")
    if m.get("format_version") != FORMAT_VERSION:
        raise IndexFormatError(f"{d}: unsupported format_version {m.get('format_version')}")
    vocab = json.loads((d / "vocab.json").read_text(encoding="utf-8"))
    csc = sparse.csc_matrix((np.load(d / "data.npy"), np.load(d / "indices.npy"), np.load(d / "indptr.npy")),
                            shape=(m["n_rows"], m["vocab_size"]))
    return SparseIndex(
        vocabulary={g: i for i, g in enumerate(vocab)},
        idf=np.load(d / "idf.npy"),
        matrix=csc.tocsr(),
        concept_ids=json.loads((d / "concepts.json").read_text(encoding="utf-8")),
        row_concept=np.load(d / "row_concept.npy"),
        aliases=json.loads((d / "aliases.json").read_text(encoding="utf-8")),
        kb_hash=m["kb_hash"],
        params={"n": m["params"]["n"], "lowercase": m["params"]["lowercase"]},
    )
