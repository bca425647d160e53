"""Write the mini-benchmark shipped under src/mednorm/data/minibench/.

Produces toy UMLS RRF files (50 concepts in English, French and German plus
rows that the KB builder must drop), a 40-mention dataset with
train/validation/test splits, and the run config. Re-running the script
reproduces the checked-in files byte for byte.

    python3 scripts/make_minibench.py
"""

import json
import re
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "mednorm" / "data" / "minibench"

# cui, semantic types, English (first is preferred), French, German
CONCEPTS = [
    ("C9000001", "T047", ["Diabetes mellitus", "diabetes", "DM"], ["diabète sucré", "diabète"], ["Zuckerkrankheit"]),
    ("C9000002", "T047", ["Type 2 diabetes mellitus", "type 2 diabetes", "T2DM"], ["diabète de type 2"], ["Typ-2-Diabetes"]),
    ("C9000003", "T047", ["Hypertension", "high blood pressure", "HTN"], ["hypertension artérielle"], ["Bluthochdruck"]),
    ("C9000004", "T047", ["Heart failure", "cardiac failure"], ["insuffisance cardiaque"], ["Herzinsuffizienz"]),
    ("C9000005", "T047", ["Myocardial infarction", "heart attack", "MI"], ["infarctus du myocarde"], ["Herzinfarkt"]),
    ("C9000006", "T047", ["Multiple sclerosis", "MS"], ["sclérose en plaques", "SEP"], ["Multiple Sklerose"]),
    ("C9000007", "T047", ["Mitral valve stenosis", "mitral stenosis", "MS"], ["rétrécissement mitral"], ["Mitralstenose"]),
    ("C9000008", "T047", ["Systemic lupus erythematosus", "SLE", "lupus"], ["lupus érythémateux systémique"],
     ["systemischer Lupus erythematodes"]),
    ("C9000009", "T047", ["Lupus vulgaris", "lupus"], ["lupus tuberculeux"], ["Lupus vulgaris"]),
    ("C9000010", "T047", ["Common cold", "cold", "coryza"], ["rhume"], ["Erkältung"]),
    ("C9000011", "T047", ["Pneumonia", "lung inflammation"], ["pneumonie"], ["Lungenentzündung"]),
    ("C9000012", "T047", ["Asthma", "bronchial asthma"], ["asthme"], ["Asthma"]),
    ("C9000013", "T047", ["Chronic obstructive pulmonary disease", "COPD"],
     ["bronchopneumopathie chronique obstructive", "BPCO"], ["COPD"]),
    ("C9000014", "T047", ["Tuberculosis", "TB"], ["tuberculose"], ["Tuberkulose"]),
    ("C9000015", "T047", ["Migraine", "migraine headache"], ["migraine"], ["Migräne"]),
    ("C9000016", "T184", ["Headache", "cephalalgia"], ["céphalée", "mal de tête"], ["Kopfschmerz"]),
    ("C9000017", "T184", ["Fever", "pyrexia"], ["fièvre"], ["Fieber"]),
    ("C9000018", "T184", ["Cough"], ["toux"], ["Husten"]),
    ("C9000019", "T047", ["Anemia", "anaemia"], ["anémie"], ["Anämie"]),
    ("C9000020", "T191", ["Breast cancer", "breast carcinoma"], ["cancer du sein"], ["Brustkrebs"]),
    ("C9000021", "T191", ["Lung cancer", "lung carcinoma"], ["cancer du poumon"], ["Lungenkrebs"]),
    ("C9000022", "T047", ["Renal failure", "kidney failure"], ["insuffisance rénale"], ["Niereninsuffizienz"]),
    ("C9000023", "T047", ["Hepatitis", "liver inflammation"], ["hépatite"], ["Hepatitis"]),
    ("C9000024", "T047", ["Stroke", "cerebrovascular accident", "CVA"], ["accident vasculaire cérébral", "AVC"],
     ["Schlaganfall"]),
    ("C9000025", "T048", ["Depression", "depressive disorder"], ["dépression"], ["Depression"]),
    ("C9000026", "T121", ["Insulin"], ["insuline"], ["Insulin"]),
    ("C9000027", "T121", ["Metformin"], ["metformine"], ["Metformin"]),
    ("C9000028", "T121", ["Aspirin", "acetylsalicylic acid"], ["aspirine", "acide acétylsalicylique"],
     ["Acetylsalicylsäure"]),
    ("C9000029", "T121", ["Paracetamol", "acetaminophen"], ["paracétamol"], ["Paracetamol"]),
    ("C9000030", "T121", ["Ibuprofen"], ["ibuprofène"], ["Ibuprofen"]),
    ("C9000031", "T121", ["Amoxicillin"], ["amoxicilline"], ["Amoxicillin"]),
    ("C9000032", "T121", ["Morphine"], ["morphine"], ["Morphin"]),
    ("C9000033", "T121", ["Heparin"], ["héparine"], ["Heparin"]),
    ("C9000034", "T121", ["Warfarin"], ["warfarine"], ["Warfarin"]),
    ("C9000035", "T109|T121", ["Glucose", "dextrose"], ["glucose"], ["Glukose"]),
    ("C9000036", "T070", ["Cold temperature", "cold", "low temperature"], ["froid"], ["Kälte"]),
    ("C9000037", "T116", ["Hemoglobin", "haemoglobin"], ["hémoglobine"], ["Hämoglobin"]),
    ("C9000038", "T196", ["Sodium chloride", "salt", "NaCl"], ["chlorure de sodium"], ["Natriumchlorid"]),
    ("C9000039", "T023", ["Heart"], ["cœur"], ["Herz"]),
    ("C9000040", "T023", ["Lung"], ["poumon"], ["Lunge"]),
    ("C9000041", "T023", ["Liver"], ["foie"], ["Leber"]),
    ("C9000042", "T023", ["Kidney"], ["rein"], ["Niere"]),
    ("C9000043", "T023", ["Breast"], ["sein"], ["Brust"]),
    ("C9000044", "T023", ["Brain"], ["cerveau"], ["Gehirn"]),
    ("C9000045", "T060", ["Magnetic resonance imaging", "MRI"], ["imagerie par résonance magnétique", "IRM"],
     ["Magnetresonanztomographie"]),
    ("C9000046", "T060", ["Computed tomography", "CT scan", "CT"], ["tomodensitométrie", "scanner"],
     ["Computertomographie"]),
    ("C9000047", "T061", ["Dialysis", "hemodialysis"], ["dialyse"], ["Dialyse"]),
    ("C9000048", "T061", ["Appendectomy"], ["appendicectomie"], ["Appendektomie"]),
    ("C9000049", "T059", ["Blood glucose measurement", "blood sugar test"], ["glycémie"], ["Blutzuckermessung"]),
    ("C9000050", "T061", ["Chemotherapy"], ["chimiothérapie"], ["Chemotherapie"]),
]

# rows the builder must drop: wrong language, suppressed, excluded semantic group
EXTRA_CONSO = [
    ("C9000003", "SPA", "hipertensión", "", "MDRSPA"),
    ("C9000010", "ENG", "acute nasopharyngitis NOS", "O", "MSH"),
    ("C9000098", "ENG", "Entity", "", "MSH"),
    ("C9000099", "ENG", "Stethoscope", "", "MSH"),
    ("C9000099", "FRE", "stéthoscope", "", "MSHFRE"),
]
EXTRA_STY = [("C9000098", "T071"), ("C9000099", "T073")]

SAB = {"ENG": "MSH", "FRE": "MSHFRE", "GER": "MSHGER"}

# [[surface|entity type|gold cui(s)]]
DOCUMENTS = {
    "train": [
        ("d01", "Patient de 67 ans suivi pour un [[diabète de type 2|DISO|C9000002]] traité par "
                "[[metformine|CHEM|C9000027]] et [[insuline|CHEM|C9000026]]."),
        ("d02", "Antécédent d'[[infarctus du myocarde|DISO|C9000005]] compliqué d'une "
                "[[insuffisance cardiaque congestive|DISO|C9000004]]; mise sous [[aspirine|CHEM|C9000028]]."),
        ("d03", "La [[sclérose en plaques|DISO|C9000006]] (SEP) a été confirmée par [[IRM|PROC|C9000045]] du "
                "[[cerveau|ANAT|C9000044]]."),
        ("d04", "Echocardiography showed [[MS|DISO|C9000007]] of the mitral valve with a dilated atrium; the "
                "[[heart|ANAT|C9000039]] rhythm was irregular."),
        ("d05", "Exposition prolongée au [[froid|PHEN|C9000036]] sans [[fièvre|DISO|C9000017]] ni "
                "[[toux|DISO|C9000018]]."),
        ("d06", "Frostbite of the toes after long exposure to [[cold|PHEN|C9000036]] and wind."),
        ("d16", "Un [[zona|DISO|C9999004]] thoracique est apparu."),
        ("d17", "Relapsing [[MS|DISO|C9000006]] with multiple new plaques on imaging."),
        ("d07", "Une [[maladie de Kawasaki|DISO|C9999001]] a été évoquée devant une [[anémie|DISO|C9000019]]."),
        ("d08", "She caught a [[cold|DISO|C9000010]] after the [[chemotherapy|PROC|C9000050]] for "
                "[[breast carcinoma|DISO|C9000020]]."),
    ],
    "validation": [
        ("d09", "Le [[lupus érythémateux systémique|DISO|C9000008]] (LES) évolue; le [[LES|DISO|C9000008]] "
                "reste actif sous [[héparine|CHEM|C9000033]]."),
        ("d10", "[[Hépatite|DISO|C9000023]] aiguë et [[insuffisance rénale|DISO|C9000022]] nécessitant une "
                "[[dialyse|PROC|C9000047]]."),
        ("d20", "Shivering caused by [[cold|PHEN|C9000036]] water immersion."),
        ("d11", "History of [[MS|DISO|C9000006]] with demyelinating plaques and relapsing multiple lesions."),
    ],
    "test": [
        ("d12", "Auscultation suggested [[MS|DISO|C9000007]]; mitral valve replacement was discussed."),
        ("d18", "Hypothermia risk from [[cold|PHEN|C9000036]] temperature on the ward."),
        ("d19", "Un [[syndrome néphrotique|DISO|C9999003]] est suspecté."),
        ("d13", "[[Pneumopathie|DISO|C9000011]] traitée par [[amoxicilline|CHEM|C9000031]]; "
                "[[BPCO|DISO|C9000013]] connue."),
        ("d14", "Verdacht auf [[Lungenkrebs|DISO|C9000021]]; [[Lupus|DISO|C9000008,C9000009]] in der Anamnese."),
        ("d15", "Traitement par [[warfarine|CHEM|C9000034]] pour une [[bronchiolite|DISO|C9999002]]."),
    ],
}

CONFIG = """\
name: minibench
dict:
  umls:
    lang: [fr, en, de]
    meta_path: META
    semantic_groups: [ANAT, CHEM, DISO, PHEN, PROC]
linker:
  k: 64
  type_filter: {ANAT: ANAT, CHEM: CHEM, DISO: DISO, PHEN: PHEN, PROC: PROC}
reranker:
  k: 64
  lambda: 1.0
  learning_rate: 0.01
  epochs: 20
  ctx_len: 128
  seed: 42
"""

_MARK = re.compile(r"\[\[([^|\]]+)\|([^|\]]+)\|([^\]]+)\]\]")


def conso_row(cui, lat, string, n, preferred, suppress="", sab=None):
    fields = [cui, lat, "P" if preferred else "S", f"L{n:07d}", "PF" if preferred else "VO", f"S{n:07d}",
              "Y" if preferred else "N", f"A{n:07d}", "", "", "", sab or SAB[lat], "PT" if preferred else "SY",
              f"D{cui[1:]}", string, "0", suppress or "N", "256"]
    return "|".join(fields) + "|"


def write_meta():
    meta = OUT / "META"
    meta.mkdir(parents=True, exist_ok=True)
    conso, sty, n = [], [], 0
    for cui, types, en, fr, de in CONCEPTS:
        for lat, names in (("ENG", en), ("FRE", fr), ("GER", de)):
            for i, name in enumerate(names):
                n += 1
                conso.append(conso_row(cui, lat, name, n, preferred=(lat == "ENG" and i == 0)))
        for j, tui in enumerate(types.split("|")):
            sty.append(f"{cui}|{tui}|A1.2.{j}|type {tui}|AT{cui[1:]}{j}|256|")
    for cui, lat, string, suppress, sab in EXTRA_CONSO:
        n += 1
        conso.append(conso_row(cui, lat, string, n, preferred=False, suppress=suppress, sab=sab))
    for cui, tui in EXTRA_STY:
        sty.append(f"{cui}|{tui}|A1.1|type {tui}|AT{cui[1:]}0|256|")
    (meta / "MRCONSO.RRF").write_text("\n".join(conso) + "\n", encoding="utf-8")
    (meta / "MRSTY.RRF").write_text("\n".join(sty) + "\n", encoding="utf-8")


def parse_document(doc_id, marked):
    text, entities, pos = [], [], 0
    for i, m in enumerate(_MARK.finditer(marked)):
        text.append(marked[pos:m.start()])
        start = sum(map(len, text))
        surface, etype, cuis = m.groups()
        text.append(surface)
        entities.append({
            "id": f"{doc_id}-e{i}",
            "offsets": [[start, start + len(surface)]],
            "text": surface,
            "type": etype,
            "normalized": [{"db_name": "UMLS", "db_id": c} for c in cuis.split(",")],
        })
        pos = m.end()
    text.append(marked[pos:])
    return {"id": doc_id, "passages": [{"id": f"{doc_id}-p0", "text": "".join(text), "offset": 0}],
            "entities": entities}


def main():
    write_meta()
    splits = {name: [parse_document(i, t) for i, t in docs] for name, docs in DOCUMENTS.items()}
    n = sum(len(d["entities"]) for docs in splits.values() for d in docs)
    assert len(CONCEPTS) == 50 and n == 40, (len(CONCEPTS), n)
    with open(OUT / "dataset.json", "w", encoding="utf-8") as f:
        json.dump({"splits": splits}, f, ensure_ascii=False, indent=1)
        f.write("\n")
    (OUT / "minibench.yaml").write_text(CONFIG, encoding="utf-8")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
