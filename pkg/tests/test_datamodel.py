import json

import pytest
from hypothesis import given, strategies as st

from mednorm.datamodel import (ConceptRef, Dataset, Document, Mention, ParseError, Passage, SchemaError, SpanError,
                               dataset_from_json, dataset_to_json, from_ner_spans, load_dataset, save_dataset,
                               validate_dataset)


def write(tmp_path, obj, name="ds.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj), encoding="utf-8")
    return p


def doc_json(entities, text="lupus flare", doc_id="d1"):
    return {"id": doc_id, "passages": [{"id": "p0", "text": text, "offset": 0}], "entities": entities}


def entity(mid="m1", offsets=((0, 5),), text="lupus", normalized=()):
    return {"id": mid, "offsets": [list(o) for o in offsets], "text": text, "type": "DISO",
            "normalized": [{"db_name": "UMLS", "db_id": c} for c in normalized]}


def test_minimal_document_loads(tmp_path):
    ds = load_dataset(write(tmp_path, {"documents": [doc_json([entity()])]}))
    docs = list(ds.documents())
    assert len(docs) == 1
    assert [m.text for _, m in ds.mentions()] == ["lupus"]
    assert list(ds.splits) == ["test"]


def test_reversed_span_names_the_mention(tmp_path):
    path = write(tmp_path, {"documents": [doc_json([entity("bad", offsets=((5, 5),), text="")])]})
    with pytest.raises(SpanError) as err:
        load_dataset(path)
    assert err.value.mention_id == "bad"
    assert err.value.document_id == "d1"


def test_span_outside_text(tmp_path):
    path = write(tmp_path, {"documents": [doc_json([entity(offsets=((6, 40),), text="flare")])]})
    with pytest.raises(SpanError, match="d1"):
        load_dataset(path)


def test_multiple_gold_concepts_kept_in_order(tmp_path):
    ds = load_dataset(write(tmp_path, {"documents": [doc_json([entity(normalized=("C0024141", "C0409974"))])]}))
    (_, m), = ds.mentions()
    assert m.gold_concepts == (ConceptRef("UMLS", "C0024141"), ConceptRef("UMLS", "C0409974"))


def test_malformed_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json", encoding="utf-8")
    with pytest.raises(ParseError):
        load_dataset(p)


def test_missing_field_is_named(tmp_path):
    raw = doc_json([entity()])
    del raw["passages"]
    with pytest.raises(SchemaError) as err:
        load_dataset(write(tmp_path, {"documents": [raw]}))
    assert err.value.field_name == "passages"


def test_discontiguous_text_joined_by_space():
    raw = {"documents": [doc_json([entity(offsets=((0, 5), (6, 11)), text="lupus flare")])]}
    ds = dataset_from_json(raw)
    assert validate_dataset(ds) == []


def test_text_mismatch_violation():
    ds = dataset_from_json({"documents": [doc_json([entity(text="Lupus")])]})
    (v,) = validate_dataset(ds)
    assert v.rule == "text-mismatch" and v.mention_id == "m1"


def test_duplicate_document_violation():
    ds = dataset_from_json({"documents": [doc_json([]), doc_json([])]})
    assert [v.rule for v in validate_dataset(ds)] == ["duplicate-document"]


def test_offsets_count_code_points():
    text = "fièvre et toux"
    doc = from_ner_spans("d", text, [(10, 14, "DISO")])
    assert doc.mentions[0].text == "toux"


def test_from_ner_spans_examples():
    doc = from_ner_spans("d1", "lupus flare", [(0, 5, "DISO")])
    assert doc.mentions[0].text == "lupus" and doc.mentions[0].entity_type == "DISO"
    assert doc.mentions[0].gold_concepts == ()
    assert from_ner_spans("d1", "lupus flare", []).mentions == ()
    nested = from_ner_spans("d1", "lupus flare", [(0, 5, None), (3, 8, None)])
    assert len(nested.mentions) == 2


def test_from_ner_spans_out_of_bounds():
    with pytest.raises(SpanError):
        from_ner_spans("d1", "abc", [(1, 9, None)])


def test_passages_placed_at_offsets():
    doc = Document("d", (Passage("a", "Title.", 0), Passage("b", "Body", 7)))
    assert doc.text == "Title. Body"


def test_split_object_round_trip(tmp_path, minibench_dataset):
    path = tmp_path / "copy.json"
    save_dataset(minibench_dataset, path)
    assert load_dataset(path) == minibench_dataset
    assert set(minibench_dataset.splits) == {"train", "validation", "test"}


span_sets = st.lists(st.tuples(st.integers(0, 30), st.integers(1, 10), st.sampled_from(["DISO", None])), max_size=6)


@given(st.text(min_size=1, max_size=40), span_sets)
def test_ner_spans_always_validate(text, raw):
    spans = []
    for start, length, etype in raw:
        start = start % len(text)
        spans.append((start, min(len(text), start + length), etype))
    doc = from_ner_spans("d", text, spans)
    assert validate_dataset(Dataset({"test": (doc,)})) == []


@given(st.lists(st.text(alphabet="abcdé [] xyz", min_size=1, max_size=12), min_size=1, max_size=4))
def test_serialization_round_trip(words):
    text = " ".join(words)
    spans, pos = [], 0
    for w in words:
        spans.append((pos, pos + len(w), "DISO"))
        pos += len(w) + 1
    doc = from_ner_spans("d", text, spans)
    doc = Document(doc.id, doc.passages, tuple(
        Mention(m.id, m.spans, m.text, m.entity_type, (ConceptRef("UMLS", f"C{i}"),)) for i, m in enumerate(doc.mentions)))
    ds = Dataset({"train": (doc,)})
    assert dataset_from_json(json.loads(json.dumps(dataset_to_json(ds)))) == ds
