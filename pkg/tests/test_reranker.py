import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import reference as ref
from helpers import ambiguity_fixture
from mednorm.candidates import Candidate, CandidateList
from mednorm.datamodel import from_ner_spans
from mednorm.evaluation import f1_at_1
from mednorm.kb import Alias, Concept, _new_kb, load_group_map, make_concept
from mednorm.reranker import (FEATURE_NAMES, FEATURE_VERSION, NIL_ENCODING, FeatureVersionError, NonFiniteError,
                              RerankerConfig, ScorerParams, TrainingBatch, candidate_features, collect_items,
                              encode_concept, encode_mention, load_model, loss_and_grad, loss_terms, make_batch,
                              rerank, rerank_items, save_model, score_candidates, train_reranker)
from mednorm.candidates import NIL_ID

N_FEATURES = len(FEATURE_NAMES)


def doc_with(text, start, end, long_form=None, etype="DISO"):
    from dataclasses import replace

    doc = from_ner_spans("d", text, [(start, end, etype)])
    return replace(doc, mentions=(replace(doc.mentions[0], long_form=long_form),))


def batch_from(features, c, gold):
    k = len(c)
    ids = tuple(f"C{i}" for i in range(k - 1)) + (NIL_ID,)
    return TrainingBatch("m", ids, np.asarray(features, dtype=np.float64), np.asarray(c, dtype=np.float64), gold)


# -- encodings -------------------------------------------------------------


def test_mention_encoding_template():
    doc = doc_with("a lupus b", 2, 7)
    assert encode_mention(doc, doc.mentions[0], 128).serialized == "[CLS] a [START] lupus [END] b"


def test_mention_encoding_long_form():
    text = "Known systemic lupus erythematosus (SLE). SLE flare"
    start = text.rindex("SLE")
    doc = doc_with(text, start, start + 3, long_form="systemic lupus erythematosus")
    enc = encode_mention(doc, doc.mentions[0], 128).serialized
    assert "[START] SLE (systemic lupus erythematosus) [END]" in enc
    assert enc.count("[START]") == 1 and enc.count("[END]") == 1


def test_mention_encoding_zero_context():
    doc = doc_with("a lupus b", 2, 7)
    assert encode_mention(doc, doc.mentions[0], 0).serialized == "[CLS] [START] lupus [END]"


@given(st.integers(0, 40))
def test_mention_context_bounded(ctx_len):
    text = "x" * 50 + " lupus " + "y" * 50
    doc = doc_with(text, 51, 56)
    enc = encode_mention(doc, doc.mentions[0], ctx_len)
    assert len(enc.ctx_left) <= ctx_len and len(enc.ctx_right) <= ctx_len


def test_concept_encoding_example():
    aliases = ["Lupus Vulgaris", "Lupus tuberculeux", "Lupus exedens", "Lupus vulgaire", "Tuberculosis cutis luposa"]
    c = Concept("C0024131", "Lupus Vulgaris", ("T047",), tuple(Alias(a, "en") for a in aliases))
    assert encode_concept(c).serialized == (
        "T047 [TYPE] Lupus Vulgaris [TITLE] Lupus tuberculeux [SEP] Lupus exedens [SEP] Lupus vulgaire "
        "[SEP] Tuberculosis cutis luposa")


def test_concept_encoding_canonical_only():
    c = Concept("C1", "Name", ("T047",), (Alias("Name", "en"),))
    assert encode_concept(c).serialized == "T047 [TYPE] Name [TITLE]"


def test_nil_encoding():
    assert encode_concept(None).serialized == NIL_ENCODING == "[UNK]"


def test_alias_free_concept_rejected():
    with pytest.raises(ValueError):
        encode_concept(Concept("C1", "Name", ("T047",), ()))


# -- features and scores ---------------------------------------------------


@pytest.fixture(scope="module")
def hand_fixture():
    kb = _new_kb("hand", [make_concept("C1", [Alias("cough", "en"), Alias("tussis", "en")], ["T184"]),
                          make_concept("C2", [Alias("fever", "en")], ["T121"])], load_group_map())
    text = "Fever and cough (x)."
    doc = doc_with(text, 10, 15)
    cands = [Candidate("C1", 0.8), Candidate("C2", 0.3)]
    return kb, doc, cands


def test_features_hand_computed(hand_fixture):
    kb, doc, cands = hand_fixture
    rows = candidate_features(doc, doc.mentions[0], cands, kb, 128, {"DISO": "DISO"})
    expected = [
        # cg, 1/rank, jaccard, exact, group, ln(1+aliases), ln(1+shared context words), nil
        [0.8, 1.0, 1.0, 1.0, 1.0, math.log(3), 0.0, 0.0],
        [0.3, 0.5, 0.0, 0.0, 0.0, math.log(2), math.log(2), 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    ]
    assert np.allclose(rows, expected, atol=1e-15)


def test_features_match_reference(minibench_kb, minibench_dataset):
    t2g = {g: g for g in ("ANAT", "CHEM", "DISO", "PHEN", "PROC")}
    concepts = {c.concept_id: {"aliases": c.alias_values(), "groups": minibench_kb.groups_of(c.concept_id)}
                for c in minibench_kb}
    from mednorm.sparse import build_sparse_index, query_sparse

    index = build_sparse_index(minibench_kb)
    for doc, m in minibench_dataset.mentions():
        cl = query_sparse(index, [m.text], 10, [m.id])[0]
        got = candidate_features(doc, m, cl.candidates, minibench_kb, 128, t2g)
        want = ref.features(m.text, doc.text, m.start, m.end, m.entity_type,
                            [(c.concept_id, c.score) for c in cl.candidates], concepts, t2g, 128)
        assert np.allclose(got, want, atol=1e-12), m.id


def test_zero_params_score_zero():
    b = batch_from(np.random.default_rng(0).random((4, N_FEATURES)), [.5, .4, .3, 0], 0)
    assert np.array_equal(score_candidates(ScorerParams.zeros(), b), np.zeros(4))


def test_cg_only_scores_equal_c(hand_fixture):
    kb, doc, cands = hand_fixture
    b = make_batch(doc, doc.mentions[0], CandidateList("m", tuple(cands)), kb, RerankerConfig())
    assert np.array_equal(score_candidates(ScorerParams.cg_only(), b), b.cg_scores)


def test_batch_invariants():
    with pytest.raises(ValueError):
        TrainingBatch("m", ("C0", "C1"), np.zeros((2, N_FEATURES)), np.zeros(2), 0)
    with pytest.raises(ValueError):
        batch_from(np.zeros((2, N_FEATURES)), [0, 0], 5)
    with pytest.raises(ValueError):
        RerankerConfig(k=1)


# -- loss and gradient -----------------------------------------------------


def test_loss_spot_value():
    # features chosen so that s = [2, 0] under unit weight on the first feature
    feats = np.zeros((2, N_FEATURES))
    feats[0, 0] = 2.0
    b = batch_from(feats, [0.0, 0.0], 0)
    loss, _ = loss_and_grad(ScorerParams.cg_only(), b, 0.0)
    assert abs(loss - math.log(1 + math.exp(-2))) <= 1e-9


def test_regularizer_zero_when_scores_equal_c():
    rng = np.random.default_rng(1)
    feats = rng.random((5, N_FEATURES))
    b = batch_from(feats, feats[:, 0], 2)
    sm, reg = loss_terms(ScorerParams.cg_only(), b)
    assert reg == 0.0
    for lam in (0.5, 1.0, 1e6):
        assert loss_and_grad(ScorerParams.cg_only(), b, lam)[0] == sm


def test_lambda_zero_is_pure_softmax():
    rng = np.random.default_rng(2)
    b = batch_from(rng.random((6, N_FEATURES)), rng.random(6), 3)
    p = ScorerParams.from_vector(rng.normal(size=N_FEATURES + 1))
    assert loss_and_grad(p, b, 0.0)[0] == pytest.approx(loss_terms(p, b)[0], abs=1e-12)


def random_triple(rng):
    k = int(rng.integers(2, 10))
    feats = rng.normal(size=(k, N_FEATURES))
    c = np.append(rng.random(k - 1), 0.0)
    params = ScorerParams.from_vector(rng.normal(size=N_FEATURES + 1))
    return params, batch_from(feats, c, int(rng.integers(0, k)))


def finite_difference(params, batch, lam, h=1e-6):
    theta = params.to_vector()
    out = np.zeros_like(theta)
    for j in range(len(theta)):
        up, down = theta.copy(), theta.copy()
        up[j] += h
        down[j] -= h
        out[j] = (loss_and_grad(ScorerParams.from_vector(up), batch, lam)[0]
                  - loss_and_grad(ScorerParams.from_vector(down), batch, lam)[0]) / (2 * h)
    return out


def relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0, 2.0])
def test_gradient_matches_finite_differences(lam):
    rng = np.random.default_rng(int(lam * 10) + 7)
    for _ in range(25):
        params, batch = random_triple(rng)
        _, grad = loss_and_grad(params, batch, lam)
        assert relative_error(grad, finite_difference(params, batch, lam)) <= 1e-5


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0, 2.0])
def test_loss_and_grad_match_reference(lam):
    rng = np.random.default_rng(99)
    for _ in range(20):
        params, batch = random_triple(rng)
        loss, grad = loss_and_grad(params, batch, lam)
        want_loss, want_grad = ref.loss_and_grad(params.to_vector().tolist(), batch.features.tolist(),
                                                 batch.cg_scores.tolist(), batch.gold_index, lam)
        assert loss == pytest.approx(want_loss, rel=1e-12)
        assert np.allclose(grad, want_grad, rtol=1e-10, atol=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=8), st.data())
def test_softmax_loss_non_negative(scores, data):
    feats = np.zeros((len(scores), N_FEATURES))
    feats[:, 0] = scores
    gold = data.draw(st.integers(0, len(scores) - 1))
    sm, _ = loss_terms(ScorerParams.cg_only(), batch_from(feats, np.zeros(len(scores)), gold))
    assert sm >= 0.0


def test_non_finite_is_an_error():
    feats = np.zeros((2, N_FEATURES))
    feats[0, 0] = np.inf
    with pytest.raises(NonFiniteError):
        loss_and_grad(ScorerParams.cg_only(), batch_from(feats, [0.0, 0.0], 0), 1.0)
    with pytest.raises(NonFiniteError):
        ScorerParams.from_vector(np.full(N_FEATURES + 1, np.nan))


# -- training and re-ranking ------------------------------------------------


@pytest.fixture(scope="module")
def ambiguity():
    kb, ds, cands = ambiguity_fixture()
    return kb, collect_items(ds, cands, "train"), collect_items(ds, cands, "test")


def gold_of(items):
    return {it.mention.id: [r.db_id for r in it.mention.gold_concepts] for it in items}


def test_lambda_zero_improves_on_separable_fixture(ambiguity):
    kb, train, _ = ambiguity
    cfg = RerankerConfig(lam=0.0)
    before = f1_at_1(gold_of(train), rerank_items(ScorerParams.cg_only(), train, kb, cfg))
    params, report = train_reranker(train, [], kb, cfg)
    after = f1_at_1(gold_of(train), rerank_items(params, train, kb, cfg))
    assert after > before
    assert report.initial_val_f1 == before


def test_more_shared_alias_words_promote_gold(ambiguity):
    kb, train, test = ambiguity
    cfg = RerankerConfig(lam=0.0)
    params, _ = train_reranker(train, [], kb, cfg)
    for it in test:
        assert it.candidates.concept_ids[0] != it.mention.gold_concepts[0].db_id
        out = rerank(params, it.candidates, it.doc, it.mention, kb, cfg)
        assert out.concept_ids[0] == it.mention.gold_concepts[0].db_id


def test_training_loss_decreases_with_small_step(ambiguity):
    kb, train, _ = ambiguity
    _, report = train_reranker(train, [], kb, RerankerConfig(lam=0.0, learning_rate=1e-3, epochs=10))
    losses = [e.loss for e in report.epochs]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_training_is_deterministic(ambiguity):
    kb, train, test = ambiguity
    cfg = RerankerConfig(lam=1.0, epochs=5)
    (p1, r1), (p2, r2) = train_reranker(train, test, kb, cfg), train_reranker(train, test, kb, cfg)
    assert np.array_equal(p1.to_vector(), p2.to_vector())
    assert r1.digest() == r2.digest()


def test_empty_training_set_rejected(ambiguity):
    kb, _, _ = ambiguity
    with pytest.raises(ValueError):
        train_reranker([], [], kb)


def test_cg_only_preserves_order(ambiguity):
    kb, train, _ = ambiguity
    for it in train:
        out = rerank(ScorerParams.cg_only(), it.candidates, it.doc, it.mention, kb)
        assert out.concept_ids == it.candidates.concept_ids
        assert not out.abstain


def test_empty_candidates_abstain(ambiguity):
    kb, train, _ = ambiguity
    it = train[0]
    out = rerank(ScorerParams.cg_only(), CandidateList(it.mention.id), it.doc, it.mention, kb)
    assert out.abstain and out.concept_ids == [NIL_ID]


def test_nil_wins_when_it_outscores_everything(ambiguity):
    kb, train, _ = ambiguity
    w = np.zeros(N_FEATURES)
    w[FEATURE_NAMES.index("nil")] = 5.0
    it = train[0]
    out = rerank(ScorerParams(w), it.candidates, it.doc, it.mention, kb)
    assert out.abstain and out.concept_ids[0] == NIL_ID


def test_gold_outside_candidates_maps_to_nil(ambiguity):
    kb, train, _ = ambiguity
    it = train[0]
    b = make_batch(it.doc, it.mention, it.candidates, kb, RerankerConfig(k=3), gold_id="NOT-THERE")
    assert b.gold_index == b.nil_index == 2
    assert b.cg_scores[-1] == 0.0


def test_model_round_trip_and_version_check(tmp_path, ambiguity):
    kb, train, _ = ambiguity
    cfg = RerankerConfig(lam=0.5, epochs=2)
    params, report = train_reranker(train, [], kb, cfg)
    save_model(tmp_path / "m.json", params, cfg, report)
    loaded, loaded_cfg = load_model(tmp_path / "m.json")
    assert np.array_equal(loaded.to_vector(), params.to_vector())
    assert loaded_cfg == cfg
    obj = json.loads((tmp_path / "m.json").read_text())
    obj["feature_version"] = FEATURE_VERSION + 1
    (tmp_path / "m.json").write_text(json.dumps(obj))
    with pytest.raises(FeatureVersionError):
        load_model(tmp_path / "m.json")
    stale = ScorerParams(params.weights, params.bias, FEATURE_VERSION + 1)
    with pytest.raises(FeatureVersionError):
        rerank(stale, train[0].candidates, train[0].doc, train[0].mention, kb)
