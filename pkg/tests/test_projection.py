import json
import threading
from dataclasses import replace
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, settings, strategies as st

from mednorm.datamodel import ConceptRef, Dataset, from_ner_spans
from mednorm.projection import (RecoveredText, RecoveryFailure, RemoteTranslator, insert_markers, project_dataset,
                                recover_spans)


def doc(text, spans, doc_id="d"):
    d = from_ner_spans(doc_id, text, [(s, e, "DISO") for s, e in spans])
    ms = tuple(replace(m, gold_concepts=(ConceptRef("UMLS", f"C{i}"),)) for i, m in enumerate(d.mentions))
    return replace(d, mentions=ms)


def test_insert_single_marker():
    assert insert_markers(doc("lupus flare", [(0, 5)])).text == "[lupus] flare"


def test_insert_two_markers_in_order():
    marked = insert_markers(doc("lupus flare and fever", [(16, 21), (0, 5)]))
    assert marked.text == "[lupus] flare and [fever]"
    assert len(marked.origin_mention_ids) == 2


def test_insert_without_mentions():
    assert insert_markers(doc("lupus flare", [])).text == "lupus flare"


def test_existing_brackets_escaped():
    marked = insert_markers(doc("dose [mg] lupus", [(10, 15)]))
    assert marked.escaped == 2
    rec = recover_spans(marked.text, 1)
    assert rec == RecoveredText("dose [mg] lupus", ((10, 15),))


def test_recover_simple():
    assert recover_spans("[lupus] aufflammen", 1) == RecoveredText("lupus aufflammen", ((0, 5),))


def test_recover_unbalanced():
    out = recover_spans("lupus] aufflammen", 1)
    assert isinstance(out, RecoveryFailure) and out.reason == "unbalanced"


def test_recover_count_mismatch():
    out = recover_spans("[a] [b]", 1)
    assert isinstance(out, RecoveryFailure) and out.reason == "count mismatch"


def test_identity_projection_is_lossless(minibench_dataset):
    out, report = project_dataset(minibench_dataset, lambda s: s)
    assert report.loss_percent == 0.0 and report.lost == 0
    for split, docs in minibench_dataset.splits.items():
        for a, b in zip(docs, out.splits[split]):
            assert a.text == b.text
            assert [(m.spans, m.text, m.gold_concepts) for m in a.mentions] == \
                   [(m.spans, m.text, m.gold_concepts) for m in b.mentions]


def test_dropped_bracket_in_one_of_ten_docs():
    docs = tuple(doc(f"patient {i} has lupus", [(len(f"patient {i} has "), len(f"patient {i} has lupus"))], f"d{i}")
                 for i in range(10))

    def translate(s):
        return s.replace("lupus]", "lupus") if s.startswith("patient 3 ") else s

    out, report = project_dataset(Dataset({"test": docs}), translate)
    assert report.loss_percent == 10.0
    assert (report.entities_in, report.entities_out) == (10, 9)
    assert [d for d, _ in report.failed_documents] == ["d3"]
    assert len(out.splits["test"]) == 9


def test_translate_error_counts_as_loss():
    def broken(s):
        raise ConnectionError("down")

    _, report = project_dataset(Dataset({"test": (doc("lupus flare", [(0, 5)]),)}), broken)
    assert report.loss_percent == 100.0
    assert "translate error" in report.failed_documents[0][1]


def test_salvage_is_off_by_default_and_recovers_intact_pairs():
    d = doc("lupus and fever", [(0, 5), (10, 15)])

    def translate(s):
        # loses the closing bracket of "fever" whenever both pairs are present
        return s.replace("fever]", "fever") if s.count("[") == 2 else s

    out, report = project_dataset(Dataset({"test": (d,)}), translate)
    assert report.lost == 2 and out.splits["test"] == ()
    out, report = project_dataset(Dataset({"test": (d,)}), translate, salvage=True)
    assert report.lost == 0
    assert [m.text for m in out.splits["test"][0].mentions] == ["lupus", "fever"]
    assert "salvaging" in report.failed_documents[0][1]


def test_overlapping_mentions_use_separate_passes():
    d = doc("systemic lupus erythematosus", [(0, 28), (9, 14)])
    out, report = project_dataset(Dataset({"test": (d,)}), lambda s: s)
    assert report.lost == 0
    assert sorted(m.spans for m in out.splits["test"][0].mentions) == [((0, 28),), ((9, 14),)]


def test_parallel_projection_keeps_order(minibench_dataset):
    serial, r1 = project_dataset(minibench_dataset, lambda s: s.upper())
    parallel, r2 = project_dataset(minibench_dataset, lambda s: s.upper(), max_workers=4)
    assert serial == parallel and r1.to_json() == r2.to_json()


text_pieces = st.lists(st.text(alphabet="ab[]\\ é", min_size=1, max_size=6), min_size=1, max_size=7)


@settings(max_examples=100)
@given(text_pieces)
def test_property_marker_round_trip(pieces):
    # every other piece becomes a mention; mentions must not start or end with whitespace
    text, spans, pos = "", [], 0
    for i, p in enumerate(pieces):
        if i % 2 and p.strip() == p:
            spans.append((pos, pos + len(p)))
        text += p
        pos += len(p)
    d = doc(text, spans)
    rec = recover_spans(insert_markers(d).text, len(spans))
    assert rec == RecoveredText(text, tuple(spans))


@settings(max_examples=50)
@given(st.lists(st.sampled_from(["keep", "drop_open", "drop_close", "double"]), min_size=1, max_size=12))
def test_property_entity_accounting(actions):
    docs = tuple(doc(f"case {i} lupus", [(len(f"case {i} "), len(f"case {i} lupus"))], f"d{i}")
                 for i in range(len(actions)))
    plan = {f"case {i} ": a for i, a in enumerate(actions)}

    def translate(s):
        a = next(v for k, v in plan.items() if s.startswith(k))
        return {"keep": s, "drop_open": s.replace("[", ""), "drop_close": s.replace("]", ""),
                "double": s + " [x]"}[a]

    out, report = project_dataset(Dataset({"test": docs}), translate)
    assert report.entities_out + report.lost == report.entities_in
    assert report.entities_out == actions.count("keep")
    assert sum(len(d.mentions) for d in out.splits["test"]) == report.entities_out


class _Upper(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        data = json.dumps({"texts": [t.upper() for t in body["texts"]]}).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


def test_remote_translator():
    server = HTTPServer(("127.0.0.1", 0), _Upper)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        tr = RemoteTranslator(f"http://127.0.0.1:{server.server_port}/translate", batch_size=2)
        assert tr("[lupus] flare") == "[LUPUS] FLARE"
        assert tr.translate_batch(["a", "b", "c"]) == ["A", "B", "C"]
        out, report = project_dataset(Dataset({"test": (doc("lupus flare", [(0, 5)]),)}), tr)
        assert report.lost == 0 and out.splits["test"][0].mentions[0].text == "LUPUS"
    finally:
        server.shutdown()
