"""Freeze Schwartz-Hearst outputs from the ``abbreviations`` package.

Each sentence is run through the published implementation and the detected
pairs are written to tests/fixtures/abbreviations_expected.json.

    python3 scripts/oracles/abbreviation_oracle.py
"""

import json
from pathlib import Path

from abbreviations import schwartz_hearst

OUT = Path(__file__).resolve().parents[2] / "tests" / "fixtures" / "abbreviations_expected.json"

SENTENCES = [
    "Patients with systemic lupus erythematosus (SLE) were followed. SLE flares were rare.",
    "Cats (and) dogs were not part of the study.",
    "No parentheses appear in this sentence at all.",
    "Magnetic resonance imaging (MRI) showed a lesion.",
    "The heart rate (HR) and blood pressure (BP) were stable.",
    "We measured tumor necrosis factor alpha (TNF-alpha) levels.",
    "Chronic obstructive pulmonary disease (COPD) is common in smokers.",
    "Diabetes mellitus type 2 (T2DM) was diagnosed in 40 patients.",
    "The insuffisance cardiaque congestive (ICC) group was larger.",
    "Polymerase chain reaction (PCR) confirmed the infection.",
    "Results were significant (p < 0.05) in all arms.",
    "Computed tomography (CT) was normal (see figure 2).",
    "Acute myocardial infarction (AMI) patients received aspirin.",
    "The body mass index (BMI; kg/m2) was recorded.",
    "Multiple sclerosis (MS) and myasthenia gravis (MG) are autoimmune.",
    "Interleukin 6 (IL-6) was elevated.",
    "Non-small cell lung cancer (NSCLC) accounts for most cases.",
    "Human immunodeficiency virus (HIV) infection was excluded.",
    "Electrocardiogram (ECG) findings were unremarkable.",
    "The World Health Organization (WHO) criteria were used.",
    "Blood samples (n = 12) were analysed.",
    "A 'quoted term' (QT) appears here.",
    "Glomerular filtration rate (GFR) declined over time.",
    "We used the (unbalanced parenthesis in this line.",
    "Atrial fibrillation (AF) increases the risk of stroke (CVA).",
    "Rheumatoid arthritis (RA) was treated with methotrexate (MTX).",
    "Deep vein thrombosis (DVT) and pulmonary embolism (PE) were recorded.",
    "Chronic kidney disease (stage 3) was frequent.",
    "The emergency department (ED) admitted 300 patients.",
    "Lupus vulgaris (LV) is a form of cutaneous tuberculosis.",
]


def main():
    expected = [
        {"text": s, "pairs": schwartz_hearst.extract_abbreviation_definition_pairs(doc_text=s, first_definition=True)}
        for s in SENTENCES
    ]
    OUT.write_text(json.dumps(expected, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(sum(len(e["pairs"]) for e in expected), "pairs")


if __name__ == "__main__":
    main()
