"""Shared data model: boxes, question types, puzzle instances, manifests.

Everything here is immutable after construction and validated on the way
in, so downstream stages never re-check invariants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

# Default question-type taxonomy, order matters: it is the tie-break and
# substring-scan priority everywhere a type list is consumed.
DEFAULT_TYPES = (
    "counting",
    "arithmetic",
    "algebra",
    "spatial reasoning",
    "measuring",
    "logic",
    "path finding",
)

OPTION_LETTERS = ("A", "B", "C", "D", "E")


class SchemaError(ValueError):
    """A structured input file violated its schema; message carries the field path."""


@dataclass(frozen=True, slots=True)
class BBox:
    """Axis-aligned pixel box: absolute corner coordinates, origin top-left,
    x1 < x2 and y1 < y2."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if not (0 <= self.x1 < self.x2 and 0 <= self.y1 < self.y2):
            raise ValueError(
                f"degenerate box ({self.x1},{self.y1},{self.x2},{self.y2}): "
                "need 0 <= x1 < x2 and 0 <= y1 < y2"
            )

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)


def validate_type_list(type_list) -> tuple[str, ...]:
    """Check a question-type list: nonempty, lowercase names, no duplicates."""
    types = tuple(type_list)
    if not types:
        raise ValueError("type list must not be empty")
    seen = set()
    for name in types:
        if not isinstance(name, str) or not name or name != name.lower():
            raise ValueError(f"bad question type name: {name!r}")
        if name in seen:
            raise ValueError(f"duplicate question type: {name!r}")
        seen.add(name)
    return types


@dataclass(frozen=True, slots=True)
class PuzzleInstance:
    """One sample of one root puzzle: an image, a question, five options."""

    puzzle_id: int
    instance_id: int
    image_path: str
    question: str
    options: tuple[str, str, str, str, str]
    answer: str | None = None

    def __post_init__(self):
        if len(self.options) != 5:
            raise ValueError(f"need exactly 5 options, got {len(self.options)}")
        if self.answer is not None and self.answer not in OPTION_LETTERS:
            raise ValueError(f"answer must be one of A..E, got {self.answer!r}")


@dataclass(frozen=True, slots=True)
class ManifestEntry:
    weight: float
    modality: str  # "text" | "vl"


class PuzzleManifest:
    """Per-puzzle weight and modality table used by the scorer."""

    def __init__(self, entries: dict[int, ManifestEntry]):
        for pid, e in entries.items():
            if e.weight <= 0:
                raise ValueError(f"puzzle {pid}: weight must be > 0, got {e.weight}")
            if e.modality not in ("text", "vl"):
                raise ValueError(f"puzzle {pid}: modality must be 'text' or 'vl', got {e.modality!r}")
        self._entries = dict(entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, puzzle_id: int) -> bool:
        return puzzle_id in self._entries

    def weight(self, puzzle_id: int) -> float:
        return self._entries[puzzle_id].weight

    def modality(self, puzzle_id: int) -> str:
        return self._entries[puzzle_id].modality

    def puzzle_ids(self) -> list[int]:
        return sorted(self._entries)


def load_manifest(path) -> PuzzleManifest:
    """Read a manifest file: JSON array of {"puzzle_id", "weight", "modality"}."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, list):
        raise SchemaError("manifest: expected a JSON array of objects")
    entries: dict[int, ManifestEntry] = {}
    for i, row in enumerate(data):
        where = f"manifest[{i}]"
        if not isinstance(row, dict):
            raise SchemaError(f"{where}: expected an object")
        for field in ("puzzle_id", "weight", "modality"):
            if field not in row:
                raise SchemaError(f"{where}: missing field '{field}'")
        unknown = set(row) - {"puzzle_id", "weight", "modality"}
        if unknown:
            raise SchemaError(f"{where}: unknown fields {sorted(unknown)}")
        pid = row["puzzle_id"]
        if not isinstance(pid, int) or isinstance(pid, bool):
            raise SchemaError(f"{where}.puzzle_id: expected an integer")
        if pid in entries:
            raise SchemaError(f"{where}: duplicate puzzle_id {pid}")
        w = row["weight"]
        if not isinstance(w, (int, float)) or isinstance(w, bool) or w <= 0:
            raise SchemaError(f"{where}.weight: expected a positive number, got {w!r}")
        mod = row["modality"]
        if mod not in ("text", "vl"):
            raise SchemaError(f"{where}.modality: expected 'text' or 'vl', got {mod!r}")
        entries[pid] = ManifestEntry(weight=float(w), modality=mod)
    return PuzzleManifest(entries)


def load_instances(path) -> list[PuzzleInstance]:
    """Read puzzle instances from a JSON-lines file.

    One object per line: {"puzzle_id", "instance_id", "image", "question",
    "options": [5 strings], "answer": optional "A".."E"}.
    """
    instances = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"instances line {lineno}"
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{where}: invalid JSON: {e}") from e
            for field in ("puzzle_id", "instance_id", "question", "options"):
                if field not in row:
                    raise SchemaError(f"{where}: missing field '{field}'")
            opts = row["options"]
            if not isinstance(opts, list) or len(opts) != 5:
                raise SchemaError(f"{where}.options: expected a list of 5 strings")
            key = (row["puzzle_id"], row["instance_id"])
            if key in seen:
                raise SchemaError(f"{where}: duplicate (puzzle_id, instance_id) {key}")
            seen.add(key)
            try:
                instances.append(
                    PuzzleInstance(
                        puzzle_id=row["puzzle_id"],
                        instance_id=row["instance_id"],
                        image_path=row.get("image", ""),
                        question=row["question"],
                        options=tuple(opts),
                        answer=row.get("answer"),
                    )
                )
            except ValueError as e:
                raise SchemaError(f"{where}: {e}") from e
    return instances


def merge_config(defaults: dict, overrides: dict, where: str = "config") -> dict:
    """Overlay a configuration dict onto defaults; unknown keys are errors."""
    merged = dict(defaults)
    for key, value in overrides.items():
        if key not in defaults:
            raise SchemaError(f"{where}: unknown key '{key}'")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            merged[key] = merge_config(defaults[key], value, f"{where}.{key}")
        else:
            merged[key] = value
    return merged


def load_config(path, defaults: dict) -> dict:
    """Read a JSON config file and merge it over defaults (unknown keys rejected)."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise SchemaError("config: expected a JSON object")
    return merge_config(defaults, data)


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area; 0.0 for disjoint boxes."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)
