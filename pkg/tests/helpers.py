from pathlib import Path

from mednorm.kb import Alias, _new_kb, load_group_map, make_concept

FIXTURES = Path(__file__).parent / "fixtures"

LUPUS_KB = {
    "C0024131": ["Lupus Vulgaris", "Lupus tuberculeux", "lupus"],
    "C0024141": ["Systemic lupus erythematosus", "SLE", "lupus"],
    "C0409974": ["Lupus Erythematosus", "lupus érythémateux"],
    "C0018802": ["Heart failure", "insuffisance cardiaque"],
    "C0011849": ["Diabetes mellitus", "diabète sucré"],
}


def toy_kb(table, types=("T047",), name="toy"):
    concepts = [make_concept(cid, [Alias(a, "en") for a in aliases], types) for cid, aliases in table.items()]
    return _new_kb(name, concepts, load_group_map())


def oracle_rows(kb):
    rows = kb.alias_rows()
    return [a for a, _ in rows], [c for _, c in rows]


def as_pairs(cl):
    return [(c.concept_id, c.score) for c in cl.candidates]


# Ambiguous short forms whose two readings tie in candidate generation; the
# lower id always wins the tie, so only context words can pick the other one.
AMBIGUOUS = [
    ("MS", ["multiple sclerosis", "demyelinating disease"], ["mitral stenosis", "valve narrowing"]),
    ("cold", ["common cold", "viral rhinitis"], ["hypothermia", "chill exposure"]),
    ("RA", ["rheumatoid arthritis", "joint inflammation"], ["right atrium", "cardiac chamber"]),
    ("PE", ["pulmonary embolism", "lung clot"], ["physical examination", "bedside assessment"]),
    ("CVA", ["cerebrovascular accident", "brain stroke"], ["costovertebral angle", "flank region"]),
    ("MI", ["myocardial infarction", "heart attack"], ["mitral insufficiency", "valve regurgitation"]),
]


def ambiguity_fixture():
    """KB, dataset and sparse candidates for the context-resolved short forms.

    Train holds one document per reading; test holds one document per pair
    whose context shares three alias words with the second reading and one
    with the first.
    """
    from mednorm.datamodel import ConceptRef, Dataset, Document, Mention, from_ner_spans
    from mednorm.pipeline import SparseGenerator, generate_candidates
    from mednorm.sparse import build_sparse_index

    table, docs, test_docs = {}, [], []
    for i, (short, first, second) in enumerate(AMBIGUOUS):
        a, b = f"A{i}", f"B{i}"
        table[a] = [short] + first
        table[b] = [short] + second
        for cid, extra in ((a, first), (b, second)):
            text = f"Patient with {extra[1]} and {short} today."
            docs.append(_gold_doc(f"{cid}-doc", text, short, cid))
        b_words = second[1].split() + second[0].split()[:1]
        a_word = first[-1].split()[-1]
        text = f"Noted {' '.join(b_words)} {a_word} then {short} again."
        test_docs.append(_gold_doc(f"T{i}-doc", text, short, b))
    kb = toy_kb(table, name="ambiguous")
    ds = Dataset({"train": tuple(docs), "test": tuple(test_docs)})
    raw = generate_candidates(ds, [SparseGenerator(build_sparse_index(kb))], k=64, kb=kb)
    return kb, ds, {mid: per_gen["sparse"] for mid, per_gen in raw.items()}


def _gold_doc(doc_id, text, surface, cid):
    from dataclasses import replace

    from mednorm.datamodel import ConceptRef, from_ner_spans

    start = text.rindex(surface)
    doc = from_ner_spans(doc_id, text, [(start, start + len(surface), "DISO")])
    m = replace(doc.mentions[0], id=f"{doc_id}-m", gold_concepts=(ConceptRef("UMLS", cid),))
    return replace(doc, mentions=(m,))
