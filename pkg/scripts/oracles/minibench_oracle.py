"""Precompute the mini-benchmark targets with the reference implementations.

Reads the shipped RRF files, dataset and config directly (no package code),
runs exhaustive sparse and dense retrieval, the max-merge ensemble, and the
re-ranker training loop, then writes tests/fixtures/minibench_expected.json.

    python3 scripts/oracles/minibench_oracle.py

numpy is used only for its seeded permutation, so the mention order per
epoch is the same stream the package draws from.
"""

import json
import sys
from pathlib import Path

import numpy as np
import yaml

sys.path.insert(0, str(Path(__file__).parent))
import reference as ref  # noqa: E402

ROOT = Path(__file__).resolve().parents[2]
BENCH = ROOT / "src" / "mednorm" / "data" / "minibench"
GROUPS = ROOT / "src" / "mednorm" / "data" / "semantic_groups.tsv"
OUT = ROOT / "tests" / "fixtures" / "minibench_expected.json"
LATS = {"en": "ENG", "fr": "FRE", "de": "GER"}


def read_kb(cfg):
    group_of = {}
    for line in GROUPS.read_text(encoding="utf-8").splitlines():
        if line and not line.startswith("#"):
            tui, group = line.split("\t")[:2]
            group_of[tui] = group
    umls = cfg["dict"]["umls"]
    meta = BENCH / umls["meta_path"]
    wanted_groups = set(umls["semantic_groups"])
    lats = {LATS[lang]: lang for lang in umls["lang"]}
    types = {}
    for line in (meta / "MRSTY.RRF").read_text(encoding="utf-8").splitlines():
        f = line.split("|")
        types.setdefault(f[0], [])
        if f[1] not in types[f[0]]:
            types[f[0]].append(f[1])
    aliases = {}
    for line in (meta / "MRCONSO.RRF").read_text(encoding="utf-8").splitlines():
        f = line.split("|")
        cui, lat, string, suppress = f[0], f[1], f[14], f[16]
        if lat not in lats or suppress not in ("", "N"):
            continue
        if not any(group_of.get(t) in wanted_groups for t in types.get(cui, [])):
            continue
        aliases.setdefault(cui, set()).add((string, lats[lat]))
    return {
        cui: {"aliases": [v for v, _ in sorted(al, key=lambda x: (x[1], x[0]))],
              "groups": {group_of[t] for t in types[cui] if t in group_of}}
        for cui, al in aliases.items()
    }


def read_mentions():
    data = json.loads((BENCH / "dataset.json").read_text(encoding="utf-8"))
    out = {}
    for split, docs in data["splits"].items():
        for d in docs:
            text = d["passages"][0]["text"]
            for e in d["entities"]:
                (s, t), = e["offsets"]
                out.setdefault(split, []).append({
                    "id": e["id"], "text": e["text"], "doc": text, "start": s, "end": t, "type": e["type"],
                    "gold": [n["db_id"] for n in e["normalized"]],
                })
    return out


def train(cfg, concepts, items, val_items, ens, lam):
    rc = cfg["reranker"]
    k, lr, epochs, seed, ctx = rc["k"], rc["learning_rate"], rc["epochs"], rc["seed"], rc["ctx_len"]
    t2g = cfg["linker"]["type_filter"]

    def batch(m):
        cands = ens[m["id"]][:k - 1]
        ids = [c for c, _ in cands] + ["NIL"]
        rows = ref.features(m["text"], m["doc"], m["start"], m["end"], m["type"], cands, concepts, t2g, ctx)
        return ids, rows, [s for _, s in cands] + [0.0]

    batches = []
    for m in items:
        ids, rows, c = batch(m)
        for g in m["gold"]:
            batches.append((rows, c, ids.index(g) if g in ids[:-1] else len(ids) - 1))
    val = [(m, batch(m)) for m in val_items]
    gold = {m["id"]: m["gold"] for m in val_items}

    def val_f1(theta):
        return ref.f1_at_1(gold, {m["id"]: ref.rerank(theta, ids, rows) for m, (ids, rows, _) in val})

    theta = [1.0] + [0.0] * 8
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(epochs):
        for i in rng.permutation(len(batches)):
            rows, c, g = batches[int(i)]
            _, grad = ref.loss_and_grad(theta, rows, c, g, lam)
            grad = ref.clip(grad, 1.0)
            theta = [a - lr * b for a, b in zip(theta, grad)]
        f1 = val_f1(theta)
        if best is None or f1 > best[0]:
            best = (f1, theta)
    return best[1], batch


def main():
    cfg = yaml.safe_load((BENCH / "minibench.yaml").read_text(encoding="utf-8"))
    concepts = read_kb(cfg)
    rows = [(a, cui) for cui in sorted(concepts) for a in concepts[cui]["aliases"]]
    aliases, row_concepts = [a for a, _ in rows], [c for _, c in rows]
    splits = read_mentions()
    every = [m for ms in splits.values() for m in ms]
    k = cfg["linker"]["k"]
    queries = [m["text"] for m in every]
    sparse = dict(zip([m["id"] for m in every], ref.sparse_scan(aliases, row_concepts, queries, k)))
    dense = dict(zip([m["id"] for m in every], ref.dense_scan(aliases, row_concepts, queries, k)))
    ens = {mid: ref.max_merge(sparse[mid], dense[mid])[:k] for mid in sparse}
    gold_all = {m["id"]: m["gold"] for m in every}

    def ids(lists):
        return {mid: [c for c, _ in lst] for mid, lst in lists.items()}

    test_gold = {m["id"]: m["gold"] for m in splits["test"]}
    theta, batch = train(cfg, concepts, splits["train"], splits["validation"], ens, cfg["reranker"]["lambda"])
    reranked = {m["id"]: ref.rerank(theta, *batch(m)[:2]) for m in splits["test"]}
    expected = {
        "kb_concepts": len(concepts),
        "mentions": len(every),
        "recall_at_64": {
            "sparse": ref.recall_at_k(gold_all, ids(sparse), 64),
            "dense": ref.recall_at_k(gold_all, ids(dense), 64),
            "ensemble": ref.recall_at_k(gold_all, ids(ens), 64),
        },
        "test_f1_at_1": {
            "candidate_generation": ref.f1_at_1(test_gold, {m: ids(ens)[m] for m in test_gold}),
            "reranked": ref.f1_at_1(test_gold, reranked),
        },
        "reranker_lambda": cfg["reranker"]["lambda"],
    }
    OUT.write_text(json.dumps(expected, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(expected, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
