"""
Candidate generation on the mini-benchmark
==========================================

Build the 50-concept multilingual knowledge base from its RRF files, index
every alias twice (character-trigram TF-IDF and hashed n-gram embeddings),
and merge both candidate lists per mention.
"""

from importlib import resources
from pathlib import Path

from mednorm.candidates import ensemble_merge, truncate
from mednorm.config import load_config
from mednorm.datamodel import load_dataset
from mednorm.dense import HashNgramEmbedder, build_dense_index
from mednorm.evaluation import evaluate
from mednorm.kb import build_kb
from mednorm.pipeline import DenseGenerator, SparseGenerator, generate_candidates
from mednorm.sparse import build_sparse_index

bench = Path(str(resources.files("mednorm.data").joinpath("minibench")))

# %%
# The YAML config names the languages and semantic groups to keep.
cfg = load_config(bench / "minibench.yaml")
kb = build_kb(cfg.kb_config())
print(len(kb), "concepts,", len(kb.alias_rows()), "aliases")
print(kb["C9000001"].canonical_name, "->", kb["C9000001"].alias_values())

# %%
# Two generators over the same alias rows. The dense one ships with a
# deterministic hashing embedder; a served model can replace it.
embedder = HashNgramEmbedder(dim=256)
generators = [SparseGenerator(build_sparse_index(kb)),
              DenseGenerator(build_dense_index(kb, embedder), embedder)]

ds = load_dataset(bench / "dataset.json")
per_mention = generate_candidates(ds, generators, k=64, kb=kb)

# %%
# Scores from both generators are cosines, so the ensemble keeps each
# concept's best score and re-sorts.
ensemble = {mid: truncate(ensemble_merge(list(lists.values())), 64) for mid, lists in per_mention.items()}

doc, mention = next(iter(ds.mentions("test")))
print(f"\n{mention.text!r} in: {doc.text}")
for c in ensemble[mention.id].candidates[:5]:
    print(f"  {c.concept_id}  {c.score:.3f}  {kb[c.concept_id].canonical_name}")

# %%
# Recall@k per generator.
for name in ("sparse", "dense"):
    r = evaluate(ds, {mid: lists[name] for mid, lists in per_mention.items()}, (1, 5, 64))
    print(f"{name:>8}: R@1 {r.recall_at_k[1]:.3f}  R@5 {r.recall_at_k[5]:.3f}  R@64 {r.recall_at_k[64]:.3f}")
r = evaluate(ds, ensemble, (1, 5, 64))
print(f"ensemble: R@1 {r.recall_at_k[1]:.3f}  R@5 {r.recall_at_k[5]:.3f}  R@64 {r.recall_at_k[64]:.3f}")
