"""Slow, dependency-free reference implementations used as test oracles.

Everything here is written directly from the documented formulas with
plain Python lists and dicts: no numpy, no scipy, no code shared with the
package. The tests compare the package against these functions, and
minibench_oracle.py uses them to precompute the mini-benchmark targets.
"""

import hashlib
import math
import re
import struct

DECIMALS = 12
WORD = re.compile(r"\w{3,}")


def quantize(x):
    return round(x, DECIMALS) + 0.0


def grams(text, n=3):
    s = " " + text.lower() + " "
    return [s[i:i + n] for i in range(len(s) - n + 1)]


def counts(items):
    out = {}
    for x in items:
        out[x] = out.get(x, 0) + 1
    return out


def dot(a, b):
    if len(a) > len(b):
        a, b = b, a
    return sum(v * b[k] for k, v in a.items() if k in b)


def normalize(vec):
    norm = math.sqrt(sum(v * v for v in vec.values()))
    return {k: v / norm for k, v in vec.items()} if norm > 0 else dict(vec)


# -- exhaustive TF-IDF scan -------------------------------------------------


def tfidf_model(aliases, n=3):
    """Vocabulary from the aliases; idf = ln((1 + N) / (1 + df)) + 1."""
    docs = [counts(grams(a, n)) for a in aliases]
    df = {}
    for d in docs:
        for g in d:
            df[g] = df.get(g, 0) + 1
    N = len(aliases)
    idf = {g: math.log((1 + N) / (1 + c)) + 1 for g, c in df.items()}
    rows = [normalize({g: c * idf[g] for g, c in d.items()}) for d in docs]
    return idf, rows


def tfidf_query(idf, text, n=3):
    return normalize({g: c * idf[g] for g, c in counts(grams(text, n)).items() if g in idf})


def rank_concepts(row_scores, row_concepts, k, keep_nonpositive):
    """Max per concept, drop non-positive unless asked, sort by (-score, id), cut at k."""
    best = {}
    for s, cid in zip(row_scores, row_concepts):
        if cid not in best or s > best[cid]:
            best[cid] = s
    ranked = [(cid, quantize(s)) for cid, s in best.items()]
    if not keep_nonpositive:
        ranked = [(c, s) for c, s in ranked if s > 0]
    ranked.sort(key=lambda x: (-x[1], x[0]))
    return ranked[:k]


def sparse_scan(aliases, row_concepts, queries, k, n=3):
    idf, rows = tfidf_model(aliases, n)
    out = []
    for q in queries:
        qv = tfidf_query(idf, q, n)
        out.append(rank_concepts([min(dot(qv, r), 1.0) for r in rows], row_concepts, k, keep_nonpositive=False))
    return out


# -- hashed n-gram embedding and exhaustive cosine scan -------------------


def hash_embed(text, dim=256, n_lo=2, n_hi=4):
    """Signed feature hashing: bucket = h mod dim, sign from the top bit of a 64-bit blake2b digest."""
    vec = [0.0] * dim
    for n in range(n_lo, n_hi + 1):
        for g in grams(text, n):
            h = int.from_bytes(hashlib.blake2b(g.encode("utf-8"), digest_size=8).digest(), "little")
            vec[h % dim] += -1.0 if h >> 63 else 1.0
    norm = math.sqrt(sum(v * v for v in vec))
    return [v / norm for v in vec] if norm > 0 else vec


def to_float32(vec):
    return list(struct.unpack(f"<{len(vec)}f", struct.pack(f"<{len(vec)}f", *vec)))


def dense_scan(aliases, row_concepts, queries, k, embed=hash_embed):
    rows = [to_float32(embed(a)) for a in aliases]
    out = []
    for q in queries:
        qv = embed(q)
        scores = [max(-1.0, min(1.0, sum(x * y for x, y in zip(qv, r)))) for r in rows]
        out.append(rank_concepts(scores, row_concepts, k, keep_nonpositive=True))
    return out


def max_merge(*lists):
    best = {}
    for lst in lists:
        for cid, s in lst:
            if cid not in best or s > best[cid]:
                best[cid] = s
    return sorted(best.items(), key=lambda x: (-x[1], x[0]))


# -- metrics -----------------------------------------------------------------


def recall_at_k(gold, ranked, k):
    """gold: key -> concept ids; ranked: key -> ids in rank order."""
    units = {(key, c) for key, cs in gold.items() for c in cs}
    hits = sum(1 for key, c in units if c in ranked.get(key, [])[:k])
    return hits / len(units)


def f1_at_1(gold, ranked):
    units = {(key, c) for key, cs in gold.items() for c in cs}
    pred = {(key, ids[0]) for key, ids in ranked.items() if ids and ids[0] != "NIL"}
    tp = len(units & pred)
    p = tp / len(pred) if pred else 0.0
    r = tp / len(units) if units else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


# -- re-ranker features, loss and training --------------------------------


def features(text, doc_text, start, end, etype, cands, concepts, type_to_group, ctx_len, long_form=None):
    """Seven per-candidate features plus the NIL indicator; last row is NIL."""
    surfaces = [text] + ([long_form] if long_form else [])
    left = doc_text[max(0, start - ctx_len):start].strip()
    right = doc_text[end:end + ctx_len].strip()
    mention_words = {w for s in surfaces for w in WORD.findall(s.lower())}
    ctx_words = set(WORD.findall((left + " " + right).lower())) - mention_words
    group = type_to_group.get(etype) if etype is not None else None
    rows = []
    for i, (cid, score) in enumerate(cands):
        row = [score, 1.0 / (i + 1), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        c = concepts.get(cid)
        if c is not None:
            aliases = c["aliases"]
            best = 0.0
            for a in aliases:
                ag = set(grams(a))
                for s in surfaces:
                    sg = set(grams(s))
                    u = sg | ag
                    best = max(best, len(sg & ag) / len(u) if u else 0.0)
            row[2] = best
            row[3] = 1.0 if any(a.lower() in {s.lower() for s in surfaces} for a in aliases) else 0.0
            row[4] = 1.0 if group is not None and group in c["groups"] else 0.0
            row[5] = math.log(1 + len(aliases))
            alias_words = {w for a in aliases for w in WORD.findall(a.lower())}
            row[6] = math.log(1 + len(alias_words & ctx_words))
        rows.append(row)
    rows.append([0.0] * 7 + [1.0])
    return rows


def scores(theta, rows):
    w, b = theta[:-1], theta[-1]
    return [sum(x * y for x, y in zip(w, r)) + b for r in rows]


def loss_and_grad(theta, rows, c, gold, lam):
    s = scores(theta, rows)
    m = max(s)
    z = sum(math.exp(x - m) for x in s)
    loss = m + math.log(z) - s[gold]
    g = [math.exp(x - m) / z for x in s]
    g[gold] -= 1.0
    if lam > 0:
        r = [a - b for a, b in zip(s, c)]
        norm = math.sqrt(sum(x * x for x in r))
        loss += lam * norm
        g = [gi + lam * ri / max(norm, 1e-12) for gi, ri in zip(g, r)]
    grad = [sum(rows[i][j] * g[i] for i in range(len(rows))) for j in range(len(rows[0]))] + [sum(g)]
    return loss, grad


def clip(grad, max_norm):
    norm = math.sqrt(sum(x * x for x in grad))
    return [x * max_norm / norm for x in grad] if max_norm is not None and norm > max_norm else grad


def rerank(theta, ids, rows):
    """ids include NIL last; NIL goes first only when it strictly beats every candidate."""
    s = scores(theta, rows)
    real = sorted(zip(ids[:-1], s[:-1]), key=lambda x: (-x[1], x[0]))
    if not real or s[-1] > real[0][1]:
        return ["NIL"] + [cid for cid, _ in real]
    return [cid for cid, _ in real]
