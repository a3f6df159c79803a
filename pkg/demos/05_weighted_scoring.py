"""
Scoring predictions with per-puzzle weights
===========================================

Computes the weighted option-selection score over a batch of predictions
and renders the text/visual split report.
"""

from puzzlekit.core import ManifestEntry, PuzzleManifest
from puzzlekit.evaluate import (EvalRecord, option_accuracy, render_report,
                                split_report, wosa)

# The manifest assigns every root puzzle a weight and a modality. Weights
# let hard puzzles count for more; modalities split the report.
manifest = PuzzleManifest({
    1: ManifestEntry(weight=1.0, modality="text"),
    2: ManifestEntry(weight=2.0, modality="vl"),
    3: ManifestEntry(weight=3.0, modality="vl"),
})

# One record per answered instance. Several instances of the same root
# puzzle all carry that puzzle's weight.
records = [
    EvalRecord(1, 0, predicted="A", answer="A"),
    EvalRecord(1, 1, predicted="C", answer="C"),
    EvalRecord(2, 0, predicted="B", answer="E"),
    EvalRecord(3, 0, predicted="D", answer="D"),
]

# The score is 100 * sum(w_i * acc_i) / sum(w_i). Unweighted accuracy is
# the same formula with every weight equal.
print(f"weighted score: {wosa(records, manifest):.4f}")
print(f"plain accuracy: {option_accuracy(records):.4f}")

# Weights only matter relative to each other: scaling the whole manifest
# leaves the score unchanged.
doubled = PuzzleManifest({
    pid: ManifestEntry(2.0 * manifest.weight(pid), manifest.modality(pid))
    for pid in manifest.puzzle_ids()
})
print(f"doubled weights: {wosa(records, doubled):.4f}")

# The report splits by manifest modality; "acc" is unweighted, the rest
# are weighted scores over each subset.
report = split_report(records, manifest)
print()
print(render_report(report, format="table"))
print(render_report(report, format="json"))
