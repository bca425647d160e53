"""
Projecting annotations through translation
==========================================

Mentions are wrapped in brackets, the text goes through a translator, and
the spans are read back from wherever the brackets end up. Documents whose
brackets do not survive are dropped and counted as lost entities.
"""

import json
from importlib import resources
from pathlib import Path

from mednorm.datamodel import load_dataset
from mednorm.projection import insert_markers, project_dataset, recover_spans

bench = Path(str(resources.files("mednorm.data").joinpath("minibench")))
ds = load_dataset(bench / "dataset.json")

doc = ds.splits["train"][0]
marked = insert_markers(doc)
print(marked.text)
print(recover_spans("[Diabète] de type 2", 1))
print(recover_spans("Diabète] de type 2", 1))

# %%
# A toy translator: upper-cases the text and, for every third document,
# forgets one closing bracket the way a real system sometimes does.
calls = {"n": 0}


def flaky_translate(s):
    calls["n"] += 1
    out = s.upper()
    return out.replace("]", "", 1) if calls["n"] % 3 == 0 else out


projected, report = project_dataset(ds, flaky_translate)
print(json.dumps(report.to_json(), indent=2)[:400])
print(projected.splits["train"][0].text)
