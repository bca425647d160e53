"""Dense candidate generation over a pluggable embedding provider.

Providers map strings to fixed-length vectors. Three are built in:

* :class:`HashNgramEmbedder` -- signed feature hashing of character n-grams,
  deterministic and dependency free;
* :class:`PrecomputedEmbedder` -- vectors looked up in a JSONL file of
  ``{"text": ..., "vector": [...]}`` records;
* :class:`RemoteEmbedder` -- a service answering ``{"texts": [...]}`` with
  ``{"vectors": [[...], ...]}``, e.g. a SapBERT model server.

Index rows and queries are L2-normalized, so inner products are cosines.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .candidates import CandidateList
from .kb import KnowledgeBase
from .remote import map_batches, post_json
from .sparse import IndexFormatError, char_ngrams, top_k_by_concept

FORMAT_VERSION = 1
KIND = "dense"
ENDPOINT_ENV = "MEDNORM_EMBEDDING_URL"


class ProviderMismatchError(ValueError):
    pass


class EmbeddingLookupError(KeyError):
    def __init__(self, text: str):
        self.text = text
        super().__init__(f"no precomputed vector for text {text!r}")


@runtime_checkable
class EmbeddingProvider(Protocol):
    dim: int
    identity: str

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def _l2_normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


class HashNgramEmbedder:
    """Signed hashing of padded, lowercased character n-grams into ``dim`` buckets."""

    def __init__(self, dim: int = 256, ngram_range: tuple[int, int] = (2, 4)):
        self.dim = dim
        self.ngram_range = ngram_range
        self.identity = f"hash-ngram/v1/dim={dim}/n={ngram_range[0]}-{ngram_range[1]}"

    def _bucket(self, gram: str) -> tuple[int, float]:
        h = int.from_bytes(hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest(), "little")
        return h % self.dim, (1.0 if (h >> 63) & 1 == 0 else -1.0)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        lo, hi = self.ngram_range
        for i, t in enumerate(texts):
            for n in range(lo, hi + 1):
                for g in char_ngrams(t, n):
                    b, sign = self._bucket(g)
                    out[i, b] += sign
        return _l2_normalize(out)


class PrecomputedEmbedder:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        raw = self.path.read_bytes()
        self.vectors: dict[str, np.ndarray] = {}
        for line in raw.decode("utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                self.vectors[rec["text"]] = np.asarray(rec["vector"], dtype=np.float64)
        if not self.vectors:
            raise ValueError(f"{path}: no vectors")
        self.dim = len(next(iter(self.vectors.values())))
        self.identity = f"precomputed/{hashlib.sha256(raw).hexdigest()[:16]}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows = []
        for t in texts:
            if t not in self.vectors:
                raise EmbeddingLookupError(t)
            rows.append(self.vectors[t])
        return np.vstack(rows) if rows else np.zeros((0, self.dim))


class RemoteEmbedder:
    """Embeddings served over HTTP; the endpoint defaults to ``$MEDNORM_EMBEDDING_URL``."""

    def __init__(self, identity: str, dim: int, endpoint: str | None = None, batch_size: int = 64,
                 max_in_flight: int = 4, retries: int = 3, timeout: float = 30.0):
        endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise ValueError(f"no endpoint given and ${ENDPOINT_ENV} is unset")
        self.endpoint = endpoint
        self.identity = identity
        self.dim = dim
        self.batch_size = batch_size
        self.max_in_flight = max_in_flight
        self.retries = retries
        self.timeout = timeout

    def _embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        reply = post_json(self.endpoint, {"texts": list(texts)}, timeout=self.timeout, retries=self.retries)
        return reply["vectors"]

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        vecs = map_batches(self._embed_batch, list(texts), self.batch_size, self.max_in_flight)
        return np.asarray(vecs, dtype=np.float64).reshape(len(texts), self.dim)


def embed_texts(provider: EmbeddingProvider, texts: Sequence[str]) -> np.ndarray:
    if any(not isinstance(t, str) or not t for t in texts):
        raise ValueError("texts must be non-empty strings")
    out = np.asarray(provider.embed(texts), dtype=np.float64)
    if out.shape != (len(texts), provider.dim):
        raise ValueError(f"provider {provider.identity!r} returned shape {out.shape}, expected {(len(texts), provider.dim)}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"provider {provider.identity!r} returned non-finite values")
    return out


@dataclass(frozen=True)
class DenseIndex:
    provider_identity: str
    dim: int
    matrix: np.ndarray  # float32, rows x dim, L2-normalized
    concept_ids: list[str]
    row_concept: np.ndarray
    aliases: list[str]
    kb_hash: str

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]


def build_dense_index(kb: KnowledgeBase, provider: EmbeddingProvider, batch_size: int = 1024) -> DenseIndex:
    rows = kb.alias_rows()
    if not rows:
        raise IndexFormatError("cannot index an empty knowledge base")
    aliases = [a for a, _ in rows]
    chunks = [embed_texts(provider, aliases[i:i + batch_size]) for i in range(0, len(aliases), batch_size)]
    matrix = _l2_normalize(np.vstack(chunks)).astype(np.float32)
    concept_ids = sorted({cid for _, cid in rows})
    pos = {cid: i for i, cid in enumerate(concept_ids)}
    row_concept = np.array([pos[cid] for _, cid in rows], dtype=np.int32)
    return DenseIndex(provider.identity, provider.dim, matrix, concept_ids, row_concept, aliases, kb.kb_hash)


def query_dense(index: DenseIndex, provider: EmbeddingProvider, mentions: Sequence[str], k: int,
                mention_ids: Sequence[str] | None = None) -> list[CandidateList]:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if provider.identity != index.provider_identity:
        raise ProviderMismatchError(
            f"index was built with {index.provider_identity!r}, query provider is {provider.identity!r}")
    if mention_ids is None:
        mention_ids = [str(i) for i in range(len(mentions))]
    if not mentions:
        return []
    q = _l2_normalize(embed_texts(provider, mentions))
    sims = q @ index.matrix.astype(np.float64).T
    out = []
    for mid, row in zip(mention_ids, np.clip(sims, -1.0, 1.0)):
        cands = top_k_by_concept(row, index.row_concept, index.concept_ids, k, "dense", keep_nonpositive=True)
        out.append(CandidateList(mid, tuple(cands)))
    return out


def save_dense_index(index: DenseIndex, directory: str | Path, extra_manifest: dict | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    np.save(d / "matrix.npy", index.matrix.astype("<f4"))
    np.save(d / "row_concept.npy", index.row_concept.astype("<i4"))
    (d / "concepts.json").write_text(json.dumps(index.concept_ids, ensure_ascii=False), encoding="utf-8")
    (d / "aliases.json").write_text(json.dumps(index.aliases, ensure_ascii=False), encoding="utf-8")
    m = {
        "format_version": FORMAT_VERSION,
        "kind": KIND,
        "provider_identity": index.provider_identity,
        "params": {"dim": index.dim, "normalization": "l2 on rows and queries (cosine)", "dtype": "<f4"},
        "kb_hash": index.kb_hash,
        "n_rows": index.n_rows,
        **(extra_manifest or {}),
    }
    (d / "manifest.json").write_text(json.dumps(m, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_dense_index(directory: str | Path) -> DenseIndex:
    d = Path(directory)
    m = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    if m.get("kind") != KIND:
        raise IndexFormatError(f"{d} is not a dense index (kind={m.get('kind')!r})")
    if m.get("format_version") != FORMAT_VERSION:
        raise IndexFormatError(f"{d}: unsupported format_version {m.get('format_version')}")
    return DenseIndex(
        provider_identity=m["provider_identity"],
        dim=m["params"]["dim"],
        matrix=np.load(d / "matrix.npy"),
        concept_ids=json.loads((d / "concepts.json").read_text(encoding="utf-8")),
        row_concept=np.load(d / "row_concept.npy"),
        aliases=json.loads((d / "aliases.json").read_text(encoding="utf-8")),
        kb_hash=m["kb_hash"],
    )


def provider_from_spec(spec: str, dim: int = 256) -> EmbeddingProvider:
    """Resolve ``hash``, ``precomputed:<path>`` or ``remote:<identity>`` to a provider."""
    if spec == "hash":
        return HashNgramEmbedder(dim=dim)
    if spec.startswith("precomputed:"):
        return PrecomputedEmbedder(spec.split(":", 1)[1])
    if spec.startswith("remote:"):
        return RemoteEmbedder(identity=spec.split(":", 1)[1], dim=dim)
    raise ValueError(f"unknown embedding provider {spec!r}")
