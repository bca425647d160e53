"""
Re-ranking with a rank-regularized loss
=======================================

Train the feature-based re-ranker on the mini-benchmark for several values
of lambda, the weight of the penalty ``lambda * ||s - c||`` that ties the
learned scores ``s`` to the candidate-generation scores ``c``.
"""

from importlib import resources
from pathlib import Path

import numpy as np

from mednorm.candidates import ensemble_merge, truncate
from mednorm.config import load_config
from mednorm.datamodel import load_dataset
from mednorm.dense import HashNgramEmbedder, build_dense_index
from mednorm.evaluation import f1_at_1
from mednorm.kb import build_kb
from mednorm.pipeline import DenseGenerator, SparseGenerator, generate_candidates
from mednorm.reranker import (FEATURE_NAMES, ScorerParams, collect_items, encode_concept, encode_mention,
                              rerank_items, train_reranker)
from mednorm.sparse import build_sparse_index

bench = Path(str(resources.files("mednorm.data").joinpath("minibench")))
cfg = load_config(bench / "minibench.yaml")
kb = build_kb(cfg.kb_config())
ds = load_dataset(bench / "dataset.json")
embedder = HashNgramEmbedder()
raw = generate_candidates(ds, [SparseGenerator(build_sparse_index(kb)),
                               DenseGenerator(build_dense_index(kb, embedder), embedder)], k=64, kb=kb)
candidates = {mid: truncate(ensemble_merge(list(v.values())), 64) for mid, v in raw.items()}
train, val, test = (collect_items(ds, candidates, s) for s in ("train", "validation", "test"))

# %%
# The string encodings a cross-encoder would see for one mention and its
# top candidate. The built-in scorer uses hand-made features instead.
it = test[0]
print(encode_mention(it.doc, it.mention, ctx_len=40).serialized)
print(encode_concept(kb[it.candidates.concept_ids[0]]).serialized)
print(encode_concept(None).serialized)

# %%
# Before training, the scorer is the CG score alone.
gold = {i.mention.id: [r.db_id for r in i.mention.gold_concepts] for i in test}
base = cfg.reranker_config()
print(f"\nCG only: test F1@1 {f1_at_1(gold, rerank_items(ScorerParams.cg_only(), test, kb, base)):.3f}")

# %%
# One run per lambda. Checkpoints are chosen by validation F1@1.
for lam in (0.0, 0.1, 1.0, 1e6):
    rc = cfg.reranker_config(lam=lam)
    params, report = train_reranker(train, val, kb, rc)
    f1 = f1_at_1(gold, rerank_items(params, test, kb, rc))
    drift = np.abs(params.weights - ScorerParams.cg_only().weights).max()
    print(f"lambda={lam:<8g} best epoch {report.best_epoch:>2}  test F1@1 {f1:.3f}  max weight drift {drift:.3f}")

# %%
# Learned weights for lambda = 0, where nothing ties them to the CG scores.
params, _ = train_reranker(train, val, kb, cfg.reranker_config(lam=0.0))
for name, w in zip(FEATURE_NAMES, params.weights):
    print(f"  {name:<18} {w:+.3f}")
