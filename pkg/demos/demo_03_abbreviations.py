"""
Abbreviation expansion
======================

Short forms defined as ``long form (SF)`` inside a document are detected
and attached to later mentions of the short form, which then carry the
long form into the re-ranker features and mention encoding.
"""

from mednorm.abbreviations import detect_pairs
from mednorm.datamodel import Dataset, from_ner_spans
from mednorm.pipeline import expand_abbreviations
from mednorm.reranker import encode_mention

text = ("Patients with systemic lupus erythematosus (SLE) and rheumatoid arthritis (RA) were included. "
        "Cats (and) dogs were not. SLE activity was scored weekly.")

# The detector follows the classic rule set exactly, including its blind
# spot: "(and)" passes the short-form checks and gets a long form too.
for pair in detect_pairs(text):
    print(f"{pair.short_form:>4} = {pair.long_form}")

# %%
# A mention of the short form picks up its long form; the text is untouched.
start = text.rindex("SLE")
ds = Dataset({"test": (from_ner_spans("d1", text, [(start, start + 3, "DISO")]),)})
expanded = expand_abbreviations(ds)
doc = expanded.splits["test"][0]
print(doc.mentions[0].long_form)
print(encode_mention(doc, doc.mentions[0], ctx_len=30).serialized)
