"""Weighted Option Selection Accuracy scoring and the four-metric report.

WOSA is 100 * sum(w_i * acc_i) / sum(w_i) over instances, where each
instance inherits its puzzle's weight and acc_i is 1 on an exact option
match. The report splits records by puzzle modality (text vs vl) and
adds the unweighted accuracy column.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .core import OPTION_LETTERS, PuzzleManifest, SchemaError

__all__ = [
    "EvalRecord",
    "WosaReport",
    "load_predictions",
    "wosa",
    "option_accuracy",
    "split_report",
    "render_report",
]


@dataclass(frozen=True, slots=True)
class EvalRecord:
    puzzle_id: int
    instance_id: int
    predicted: str
    answer: str

    def __post_init__(self):
        if self.predicted not in OPTION_LETTERS:
            raise ValueError(f"predicted option must be A..E, got {self.predicted!r}")
        if self.answer not in OPTION_LETTERS:
            raise ValueError(f"answer option must be A..E, got {self.answer!r}")

    @property
    def correct(self) -> bool:
        return self.predicted == self.answer


def load_predictions(path, manifest: PuzzleManifest) -> list[EvalRecord]:
    """Read prediction records from a JSON-lines file.

    One object per line: {"puzzle_id", "instance_id", "predicted", "answer"}.
    Unknown puzzle ids and duplicate (puzzle_id, instance_id) keys are errors.
    """
    records = []
    seen: set[tuple[int, int]] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"predictions line {lineno}"
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{where}: invalid JSON: {e}") from e
            for field in ("puzzle_id", "instance_id", "predicted", "answer"):
                if field not in row:
                    raise SchemaError(f"{where}: missing field '{field}'")
            pid = row["puzzle_id"]
            if pid not in manifest:
                raise SchemaError(f"{where}: puzzle_id {pid} not in manifest")
            key = (pid, row["instance_id"])
            if key in seen:
                raise SchemaError(f"{where}: duplicate record for {key}")
            seen.add(key)
            try:
                records.append(EvalRecord(pid, row["instance_id"], row["predicted"], row["answer"]))
            except ValueError as e:
                raise SchemaError(f"{where}: {e}") from e
    return records


def _canonical(records) -> list[EvalRecord]:
    return sorted(records, key=lambda r: (r.puzzle_id, r.instance_id))


def wosa(records, manifest: PuzzleManifest) -> float:
    """100 * sum(w_i * acc_i) / sum(w_i) over instances.

    Terms are accumulated with math.fsum in (puzzle_id, instance_id)
    order, so the result is exactly rounded and reproducible everywhere.
    """
    ordered = _canonical(records)
    if not ordered:
        raise ValueError("wosa needs at least one record")
    weights = [manifest.weight(r.puzzle_id) for r in ordered]
    hits = [w for r, w in zip(ordered, weights) if r.correct]
    # divide before scaling: the ratio is <= 1.0 exactly, so the result
    # stays in [0, 100] and an all-correct set scores 100.0 bitwise
    return 100.0 * (math.fsum(hits) / math.fsum(weights))


def option_accuracy(records) -> float:
    """Unweighted percentage of records whose predicted option is the answer."""
    records = list(records)
    if not records:
        raise ValueError("option_accuracy needs at least one record")
    # same rounding order as the weighted metric, so the two agree bitwise
    # when every weight is equal
    return 100.0 * (sum(r.correct for r in records) / len(records))


@dataclass(frozen=True, slots=True)
class WosaReport:
    """Four headline metrics plus per-split record counts.

    A metric is None when its split is empty (absent, not zero).
    """

    acc: float
    text_wosa: float | None
    vl_wosa: float | None
    tot_wosa: float
    n_text: int
    n_vl: int
    n_total: int

    def to_json(self) -> dict:
        return {
            "acc": self.acc,
            "text_wosa": self.text_wosa,
            "vl_wosa": self.vl_wosa,
            "tot_wosa": self.tot_wosa,
            "counts": {"text": self.n_text, "vl": self.n_vl, "total": self.n_total},
        }


def split_report(records, manifest: PuzzleManifest) -> WosaReport:
    """Score all records plus the text/vl modality splits."""
    records = list(records)
    if not records:
        raise ValueError("split_report needs at least one record")
    text = [r for r in records if manifest.modality(r.puzzle_id) == "text"]
    vl = [r for r in records if manifest.modality(r.puzzle_id) == "vl"]
    return WosaReport(
        acc=option_accuracy(records),
        text_wosa=wosa(text, manifest) if text else None,
        vl_wosa=wosa(vl, manifest) if vl else None,
        tot_wosa=wosa(records, manifest),
        n_text=len(text),
        n_vl=len(vl),
        n_total=len(records),
    )


def _cell(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def render_report(report: WosaReport, format: str = "table") -> str:
    """Render a report as an aligned table or as JSON (2-decimal table cells)."""
    if format == "json":
        return json.dumps(report.to_json(), indent=2)
    if format != "table":
        raise ValueError(f"unknown report format: {format!r}")
    header = ("acc", "text_wosa", "vl_wosa", "tot_wosa")
    row = (_cell(report.acc), _cell(report.text_wosa), _cell(report.vl_wosa),
           _cell(report.tot_wosa))
    widths = [max(len(h), len(v)) for h, v in zip(header, row)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
        "  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip(),
    ]
    return "\n".join(lines) + "\n"
