"""Model-input template construction and round-trip parsing.

The canonical input string for the answering model fuses the question
type, detected objects, OCR spans, the box-annotated question, and the
five options into one line with fixed separators:

    Question type: <t>. Objects: name[x1,y1,x2,y2], ... . Ocr text:txt[...], ... .
    Question: <q> Options: A: <a>; B: <b>; C: <c>; D: <d>; E: <e>.

Quirk kept on purpose: "Ocr text:" has no space before its first entry,
unlike every other section. Empty object/OCR lists render as "none.".
parse_model_input inverts build_model_input exactly, which is what the
round-trip tests lean on.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass

from .core import BBox, SchemaError

__all__ = [
    "Detection",
    "OcrSpan",
    "BoxedText",
    "ModelInput",
    "DetectionFile",
    "OcrFile",
    "TemplateParseError",
    "ingest_detections",
    "ingest_ocr",
    "order_objects",
    "annotate_question",
    "make_model_input",
    "build_model_input",
    "parse_model_input",
]

SECTION_MARKERS = ("Question type:", "Objects:", "Ocr text:", "Question:", "Options:")


@dataclass(frozen=True, slots=True)
class Detection:
    class_name: str
    bbox: BBox
    score: float

    def __post_init__(self):
        if not self.class_name:
            raise ValueError("detection class name must be nonempty")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True, slots=True)
class OcrSpan:
    text: str
    bbox: BBox
    score: float

    def __post_init__(self):
        if not self.text:
            raise ValueError("ocr span text must be nonempty")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True, slots=True)
class BoxedText:
    """A (label, box) pair as it appears in the template; scores do not
    survive serialization, so this is what ModelInput actually stores."""

    text: str
    bbox: BBox


@dataclass(frozen=True, slots=True)
class ModelInput:
    qtype: str
    objects: tuple[BoxedText, ...]
    ocr: tuple[BoxedText, ...]
    question: str
    options: tuple[str, str, str, str, str]

    def __post_init__(self):
        if len(self.options) != 5:
            raise ValueError(f"need exactly 5 options, got {len(self.options)}")


@dataclass(frozen=True, slots=True)
class DetectionFile:
    image: str
    width: int
    height: int
    detections: tuple[Detection, ...]
    n_dropped: int


@dataclass(frozen=True, slots=True)
class OcrFile:
    image: str
    spans: tuple[OcrSpan, ...]
    n_dropped: int


def _check_bbox_values(raw, where: str) -> tuple[int, int, int, int]:
    if not isinstance(raw, list) or len(raw) != 4:
        raise SchemaError(f"{where}: expected [x1, y1, x2, y2]")
    vals = []
    for k, v in enumerate(raw):
        if not isinstance(v, int) or isinstance(v, bool):
            raise SchemaError(f"{where}[{k}]: expected an integer, got {v!r}")
        vals.append(v)
    x1, y1, x2, y2 = vals
    if x1 >= x2 or y1 >= y2:
        raise SchemaError(f"{where}: inverted or empty box [{x1},{y1},{x2},{y2}]")
    return x1, y1, x2, y2


def _clamped_bbox(coords, width: int | None, height: int | None) -> BBox | None:
    """Clamp to image bounds; None when nothing is left after clamping."""
    x1, y1, x2, y2 = coords
    if width is not None:
        x1, x2 = max(0, min(x1, width)), max(0, min(x2, width))
    if height is not None:
        y1, y2 = max(0, min(y1, height)), max(0, min(y2, height))
    if x1 >= x2 or y1 >= y2:
        return None
    return BBox(x1, y1, x2, y2)


def _check_score(v, where: str) -> float:
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise SchemaError(f"{where}: expected a number, got {v!r}")
    if not (0.0 <= v <= 1.0):
        raise SchemaError(f"{where}: score out of range [0, 1]: {v}")
    return float(v)


def ingest_detections(path) -> DetectionFile:
    """Load a detector output file and validate it.

    Boxes are clamped to the declared image size; boxes that end up with
    zero area are dropped and counted in n_dropped.
    """
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise SchemaError("detections: expected a JSON object")
    for field in ("image", "width", "height", "detections"):
        if field not in data:
            raise SchemaError(f"detections: missing field '{field}'")
    width, height = data["width"], data["height"]
    for name, v in (("width", width), ("height", height)):
        if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
            raise SchemaError(f"detections.{name}: expected a positive integer")
    if not isinstance(data["detections"], list):
        raise SchemaError("detections.detections: expected a list")
    out: list[Detection] = []
    n_dropped = 0
    for i, row in enumerate(data["detections"]):
        where = f"detections[{i}]"
        if not isinstance(row, dict):
            raise SchemaError(f"{where}: expected an object")
        for field in ("class", "bbox", "score"):
            if field not in row:
                raise SchemaError(f"{where}: missing field '{field}'")
        cls = row["class"]
        if not isinstance(cls, str) or not cls:
            raise SchemaError(f"{where}.class: expected a nonempty string")
        coords = _check_bbox_values(row["bbox"], f"{where}.bbox")
        score = _check_score(row["score"], f"{where}.score")
        box = _clamped_bbox(coords, width, height)
        if box is None:
            n_dropped += 1
            continue
        out.append(Detection(class_name=cls, bbox=box, score=score))
    if n_dropped:
        warnings.warn(f"{path}: dropped {n_dropped} zero-area detection(s) after clamping")
    return DetectionFile(
        image=data["image"], width=width, height=height,
        detections=tuple(out), n_dropped=n_dropped,
    )


def ingest_ocr(path) -> OcrFile:
    """Load an OCR output file; same validation/clamping story as detections.

    Image dimensions are optional here ("width"/"height" keys); without
    them spans are validated but not clamped.
    """
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise SchemaError("ocr: expected a JSON object")
    for field in ("image", "spans"):
        if field not in data:
            raise SchemaError(f"ocr: missing field '{field}'")
    width = data.get("width")
    height = data.get("height")
    if not isinstance(data["spans"], list):
        raise SchemaError("ocr.spans: expected a list")
    out: list[OcrSpan] = []
    n_dropped = 0
    for i, row in enumerate(data["spans"]):
        where = f"spans[{i}]"
        if not isinstance(row, dict):
            raise SchemaError(f"{where}: expected an object")
        for field in ("text", "bbox", "score"):
            if field not in row:
                raise SchemaError(f"{where}: missing field '{field}'")
        text = row["text"]
        if not isinstance(text, str) or not text:
            raise SchemaError(f"{where}.text: expected a nonempty string")
        coords = _check_bbox_values(row["bbox"], f"{where}.bbox")
        score = _check_score(row["score"], f"{where}.score")
        box = _clamped_bbox(coords, width, height)
        if box is None:
            n_dropped += 1
            continue
        out.append(OcrSpan(text=text, bbox=box, score=score))
    if n_dropped:
        warnings.warn(f"{path}: dropped {n_dropped} zero-area span(s) after clamping")
    return OcrFile(image=data["image"], spans=tuple(out), n_dropped=n_dropped)


def order_objects(detections) -> list[Detection]:
    """Canonical object order: score descending, ties by (x1, y1, class name)."""
    return sorted(
        detections,
        key=lambda d: (-d.score, d.bbox.x1, d.bbox.y1, d.class_name),
    )


def _bracket(b: BBox) -> str:
    return f"[{b.x1},{b.y1},{b.x2},{b.y2}]"


def annotate_question(question: str, detections) -> str:
    """Suffix the first whole-word mention of each detected class with its box.

    Per class the highest-score detection supplies the box ("birds" does
    not match class "bird"; only the first mention per class is touched).
    """
    best: dict[str, Detection] = {}
    for d in order_objects(detections):
        if d.class_name not in best:
            best[d.class_name] = d
    insertions = []  # (position, suffix), positions refer to the original text
    for name, det in best.items():
        pattern = r"(?<!\w)" + re.escape(name) + r"(?!\w)"
        m = re.search(pattern, question, flags=re.IGNORECASE)
        if m:
            insertions.append((m.end(), _bracket(det.bbox)))
    annotated = question
    for pos, suffix in sorted(insertions, reverse=True):
        annotated = annotated[:pos] + suffix + annotated[pos:]
    return annotated


def make_model_input(qtype, detections, ocr_spans, question, options,
                     annotate: bool = True) -> ModelInput:
    """Assemble a ModelInput from ingested pieces: order the objects,
    annotate the question, and drop scores."""
    ordered = order_objects(detections)
    q = annotate_question(question, detections) if annotate else question
    return ModelInput(
        qtype=qtype,
        objects=tuple(BoxedText(d.class_name, d.bbox) for d in ordered),
        ocr=tuple(BoxedText(s.text, s.bbox) for s in ocr_spans),
        question=q,
        options=tuple(options),
    )


def build_model_input(mi: ModelInput) -> str:
    """Serialize a ModelInput to the canonical template string."""
    for marker in SECTION_MARKERS:
        if marker in mi.question:
            warnings.warn(
                f"question contains the literal section marker {marker!r}; "
                "the round trip for this input is best-effort"
            )
    parts = [f"Question type: {mi.qtype}. "]
    if mi.objects:
        items = ", ".join(f"{o.text}{_bracket(o.bbox)}" for o in mi.objects)
        parts.append(f"Objects: {items}. ")
    else:
        parts.append("Objects: none. ")
    if mi.ocr:
        items = ", ".join(f"{o.text}{_bracket(o.bbox)}" for o in mi.ocr)
        parts.append(f"Ocr text:{items}. ")
    else:
        parts.append("Ocr text: none. ")
    parts.append(f"Question: {mi.question} ")
    a, b, c, d, e = mi.options
    parts.append(f"Options: A: {a}; B: {b}; C: {c}; D: {d}; E: {e}.")
    return "".join(parts)


class TemplateParseError(ValueError):
    """Template text deviates from the grammar; carries the offset and the
    token that was expected there."""

    def __init__(self, offset: int, expected: str, found: str = ""):
        self.offset = offset
        self.expected = expected
        detail = f", found {found!r}" if found else ""
        super().__init__(f"offset {offset}: expected {expected}{detail}")


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _peek(self, n: int = 12) -> str:
        return self.text[self.pos : self.pos + n]

    def expect(self, literal: str) -> None:
        if not self.text.startswith(literal, self.pos):
            raise TemplateParseError(self.pos, repr(literal), self._peek())
        self.pos += len(literal)

    def try_take(self, literal: str) -> bool:
        if self.text.startswith(literal, self.pos):
            self.pos += len(literal)
            return True
        return False

    def until(self, literal: str, expected: str) -> str:
        idx = self.text.find(literal, self.pos)
        if idx < 0:
            raise TemplateParseError(self.pos, expected, self._peek())
        out = self.text[self.pos : idx]
        self.pos = idx
        return out

    def integer(self) -> int:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos == start:
            raise TemplateParseError(start, "an integer", self._peek())
        return int(self.text[start : self.pos])

    def boxed_items(self) -> tuple[BoxedText, ...]:
        """List of text[x1,y1,x2,y2] entries, ", "-separated, ". "-terminated."""
        items = []
        while True:
            text = self.until("[", "'[' opening a coordinate block")
            if not text:
                raise TemplateParseError(self.pos, "a nonempty label before '['")
            self.expect("[")
            coords = [self.integer()]
            for _ in range(3):
                self.expect(",")
                coords.append(self.integer())
            self.expect("]")
            try:
                box = BBox(*coords)
            except ValueError as e:
                raise TemplateParseError(self.pos, f"a valid box ({e})") from e
            items.append(BoxedText(text, box))
            if self.try_take(", "):
                continue
            self.expect(". ")
            return tuple(items)


def parse_model_input(text: str) -> ModelInput:
    """Parse a template string back to its ModelInput.

    Inverse of build_model_input on its own output. Questions containing
    a literal section marker parse best-effort: the first marker wins.
    """
    s = _Scanner(text)
    s.expect("Question type: ")
    qtype = s.until(". ", "'. ' ending the question type")
    s.expect(". ")
    s.expect("Objects: ")
    objects: tuple[BoxedText, ...] = ()
    if s.try_take("none. "):
        pass
    else:
        objects = s.boxed_items()
    s.expect("Ocr text:")
    ocr: tuple[BoxedText, ...] = ()
    if s.try_take(" none. "):
        pass
    else:
        ocr = s.boxed_items()
    s.expect("Question: ")
    question = s.until(" Options: ", "' Options: ' ending the question")
    s.expect(" Options: ")
    s.expect("A: ")
    a = s.until("; B: ", "'; B: '")
    s.expect("; B: ")
    b = s.until("; C: ", "'; C: '")
    s.expect("; C: ")
    c = s.until("; D: ", "'; D: '")
    s.expect("; D: ")
    d = s.until("; E: ", "'; E: '")
    s.expect("; E: ")
    rest = s.text[s.pos :]
    if not rest.endswith("."):
        raise TemplateParseError(len(s.text), "final '.' after option E")
    e = rest[:-1]
    return ModelInput(qtype=qtype, objects=objects, ocr=ocr, question=question,
                      options=(a, b, c, d, e))
