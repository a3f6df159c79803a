"""
Fusing detections and OCR into a model-input template
=====================================================

Takes raw detector and OCR outputs for one puzzle image and renders the
canonical template string, then parses it back to prove nothing was lost.
"""

from puzzlekit.core import BBox
from puzzlekit.template import (Detection, OcrSpan, build_model_input,
                                make_model_input, parse_model_input)

# Raw tool outputs: class/box/score triples from a detector, text spans
# from OCR. Scores order the objects but do not survive serialization.
detections = [
    Detection("bird", BBox(367, 207, 417, 266), 0.95),
    Detection("monkey", BBox(21, 195, 71, 309), 0.98),
    Detection("tiger", BBox(133, 202, 257, 294), 0.93),
    Detection("fish", BBox(277, 217, 351, 282), 0.90),
    Detection("chick", BBox(435, 221, 475, 270), 0.88),
]
spans = [
    OcrSpan("A", BBox(38, 322, 52, 340), 0.99),
    OcrSpan("B", BBox(187, 322, 201, 340), 0.99),
    OcrSpan("C", BBox(306, 322, 320, 340), 0.99),
    OcrSpan("D", BBox(384, 322, 398, 340), 0.99),
    OcrSpan("E", BBox(447, 322, 461, 340), 0.99),
]

question = ("Please put the animals in order from the smallest to the "
            "largest. The label of the animal in the middle is:")
options = ("monkey", "tiger", "fish", "bird", "chick")

# make_model_input orders objects by confidence and, by default, tags
# the first mention of each detected class inside the question with its
# box, grounding the text in the image.
mi = make_model_input("spatial reasoning", detections, spans, question, options)
print("question after annotation:")
print(" ", mi.question[:74] + "...")

text = build_model_input(mi)
print("\ntemplate:")
print(text)

# The template is a real serialization format, not display sugar:
# parsing the string yields the identical structure.
assert parse_model_input(text) == mi
print("\nround trip exact: True")

# Empty sections render as explicit "none" so downstream consumers can
# always rely on all five sections being present.
bare = make_model_input("logic", [], [], "Which statement is true?",
                        ("a", "b", "c", "d", "e"))
print("\nno detections, no OCR:")
print(build_model_input(bare))
