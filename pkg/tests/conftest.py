"""Shared fixtures: a small hand-written report corpus with known sections."""

import pytest

# Ten hand-written radiology-style reports. Each entry is
# (id, raw text, expected impression body, expected findings body);
# None means the report genuinely lacks that section.
FIXTURE_REPORTS = [
    (
        "r01",
        "FINDINGS: Clear lungs. No effusion.\nIMPRESSION: No acute disease.",
        "No acute disease.",
        "Clear lungs. No effusion.",
    ),
    (
        "r02",
        "INDICATION: Cough.\nFINDINGS: Mild cardiomegaly.\nIMPRESSION: Cardiomegaly, no edema.",
        "Cardiomegaly, no edema.",
        "Mild cardiomegaly.",
    ),
    (
        "r03",
        "Impression : Stable chest.\nfindings: Unchanged bilateral opacities.",
        "Stable chest.",
        "Unchanged bilateral opacities.",
    ),
    (
        "r04",
        "Portable view reviewed.\nFINDINGS: Low lung volumes.\nLines unchanged.\n"
        "IMPRESSION: Low volumes, lines in place.",
        "Low volumes, lines in place.",
        "Low lung volumes.\nLines unchanged.",
    ),
    (
        "r05",
        "COMPARISON: Prior radiograph.\nFINDINGS: Right basilar atelectasis.\n"
        "IMPRESSION: Atelectasis at the right base.",
        "Atelectasis at the right base.",
        "Right basilar atelectasis.",
    ),
    (
        "r06",
        "HISTORY: Fever.\nIMPRESSION: Possible early pneumonia.",
        "Possible early pneumonia.",
        None,
    ),
    (
        "r07",
        "FINDINGS: Blunting of the left costophrenic angle.\n"
        "A small effusion is suspected.\nIMPRESSION: Small left effusion.",
        "Small left effusion.",
        "Blunting of the left costophrenic angle.\nA small effusion is suspected.",
    ),
    (
        "r08",
        "findings:  Interval placement of a feeding tube. 2.3 cm nodule noted.\n"
        "impression:  Feeding tube in standard position. Nodule needs follow up.",
        "Feeding tube in standard position. Nodule needs follow up.",
        "Interval placement of a feeding tube. 2.3 cm nodule noted.",
    ),
    (
        "r09",
        "TECHNIQUE: Single frontal view.\nFINDINGS: No focal consolidation seen.\n"
        "IMPRESSION: No acute cardiopulmonary process.",
        "No acute cardiopulmonary process.",
        "No focal consolidation seen.",
    ),
    (
        "r10",
        "Comparison: None available.\nFindings: Hyperinflated lungs consistent with emphysema.\n"
        "Impression: Emphysema without superimposed process.",
        "Emphysema without superimposed process.",
        "Hyperinflated lungs consistent with emphysema.",
    ),
]


@pytest.fixture
def fixture_reports():
    return FIXTURE_REPORTS


@pytest.fixture
def fixture_corpus_text():
    """The ten reports concatenated with '==== <id>' separators."""
    blocks = [f"==== {rid}\n{raw}" for rid, raw, _, _ in FIXTURE_REPORTS]
    return "\n".join(blocks) + "\n"
