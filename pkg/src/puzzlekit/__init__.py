"""puzzlekit: desk-scale tooling for multiple-choice picture-puzzle pipelines.

Capabilities, one module each:

- rng: splitmix64-backed deterministic randomness with O(1) stream derivation
- core: boxes, puzzle instances, type taxonomy, manifests, config merging
- scene: synthetic icon scenes on a whiteboard with detection-format labels
- qtype: zero-shot question-type classification by subsampled majority vote
- template: the canonical model-input string, its builder and parser
- encoder: frozen toy transformer with per-type bottleneck adapters
- evaluate: weighted option-selection accuracy and the split report
- cli: the `puzzlekit` command tying the stages together
"""

from .core import (
    DEFAULT_TYPES,
    BBox,
    PuzzleInstance,
    PuzzleManifest,
    SchemaError,
    iou,
    load_instances,
    load_manifest,
)
from .encoder import (
    AdaptedEncoder,
    EncoderConfig,
    TrainConfig,
    count_trainable_params,
    backbone_forward,
    forward,
    gradient_check,
    init_encoder,
    loss_and_grads,
    make_counting_task,
    train,
)
from .evaluate import EvalRecord, WosaReport, option_accuracy, render_report, split_report, wosa
from .qtype import (
    VoteTally,
    build_type_prompt,
    classify_puzzle,
    majority_vote,
    parse_type_response,
    rule_backend,
    sample_instances,
)
from .rng import Rng, derive_seed, splitmix_next
from .scene import (
    Annotation,
    IconLibrary,
    SceneSpec,
    compose_scene,
    load_icon_library,
    make_icon_set,
    synth_dataset,
    write_label_file,
)
from .template import (
    Detection,
    ModelInput,
    OcrSpan,
    TemplateParseError,
    annotate_question,
    build_model_input,
    ingest_detections,
    ingest_ocr,
    make_model_input,
    order_objects,
    parse_model_input,
)

__version__ = "0.1.0"
