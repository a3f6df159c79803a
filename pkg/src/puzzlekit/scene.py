"""Synthetic icon-scene generation with detection-format labels.

Scenes are icons pasted at random positions and sizes onto a white
canvas. Placement is rejection-sampled against a pairwise-IoU cap so the
resulting boxes stay useful as detection labels. All randomness comes
from one Rng value per scene, and all pixel math is integer, so a seed
pins the output exactly on every platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import BBox, iou
from .rng import Rng, derive_seed

__all__ = [
    "IconLibrary",
    "SceneSpec",
    "Annotation",
    "load_icon_library",
    "make_icon_set",
    "compose_scene",
    "iou",
    "write_label_file",
    "read_label_file",
    "synth_dataset",
]


class IconLibrary:
    """Ordered icon classes; class id = index of the class name, sorted once."""

    def __init__(self, classes: list[str], icons: dict[str, list[np.ndarray]]):
        if not classes:
            raise ValueError("icon library needs at least one class")
        for name in classes:
            if not icons.get(name):
                raise ValueError(f"class '{name}' has no icons")
            for img in icons[name]:
                if img.ndim != 3 or img.shape[2] != 4 or img.dtype != np.uint8:
                    raise ValueError(f"class '{name}': icons must be uint8 RGBA arrays")
        self.classes = list(classes)
        self._icons = {name: list(icons[name]) for name in classes}

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def class_id(self, name: str) -> int:
        return self.classes.index(name)

    def variants(self, class_id: int) -> list[np.ndarray]:
        return self._icons[self.classes[class_id]]


def load_icon_library(icon_dir) -> IconLibrary:
    """Load an icon library from a directory of per-class subdirectories of PNGs.

    Class ids follow lexicographic subdirectory order.
    """
    root = Path(icon_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"icon directory not found: {root}")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise ValueError(f"no class subdirectories in {root}")
    icons: dict[str, list[np.ndarray]] = {}
    for name in classes:
        files = sorted((root / name).glob("*.png"))
        loaded = []
        for path in files:
            try:
                with Image.open(path) as im:
                    loaded.append(np.asarray(im.convert("RGBA"), dtype=np.uint8))
            except Exception as e:
                raise ValueError(f"cannot decode icon {path}: {e}") from e
        icons[name] = loaded
        if not loaded:
            raise ValueError(f"class directory {root / name} has no PNG icons")
    return IconLibrary(classes, icons)


def make_icon_set(n_classes: int, side: int = 48, seed: int = 0) -> IconLibrary:
    """Procedural stand-in icon library: one filled shape per class.

    Shapes cycle through disc / square / diamond / ring / cross with a
    per-class color, all drawn on transparent ground. Useful for demos
    and tests when no icon collection is on disk.
    """
    if n_classes < 1:
        raise ValueError("n_classes must be >= 1")
    rng = Rng(seed)
    yy, xx = np.mgrid[0:side, 0:side]
    c = (side - 1) / 2.0
    r = side * 0.46
    masks = {
        "disc": (xx - c) ** 2 + (yy - c) ** 2 <= r * r,
        "square": (np.abs(xx - c) <= r * 0.886) & (np.abs(yy - c) <= r * 0.886),
        "diamond": (np.abs(xx - c) + np.abs(yy - c)) <= r * 1.25,
        "ring": ((xx - c) ** 2 + (yy - c) ** 2 <= r * r)
        & ((xx - c) ** 2 + (yy - c) ** 2 >= (0.45 * r) ** 2),
        "cross": (np.abs(xx - c) <= r * 0.42) | (np.abs(yy - c) <= r * 0.42),
    }
    shape_names = list(masks)
    classes = []
    icons = {}
    for k in range(n_classes):
        shape = shape_names[k % len(shape_names)]
        name = f"{shape}{k:02d}"
        rgb = [rng.next_int(0, 180) for _ in range(3)]  # keep well below white
        icon = np.zeros((side, side, 4), dtype=np.uint8)
        m = masks[shape]
        icon[m, 0] = rgb[0]
        icon[m, 1] = rgb[1]
        icon[m, 2] = rgb[2]
        icon[m, 3] = 255
        classes.append(name)
        icons[name] = [icon]
    return IconLibrary(sorted(classes), icons)


@dataclass(frozen=True, slots=True)
class SceneSpec:
    """Recipe for one scene; seed excluded so a spec can template many scenes."""

    canvas_w: int = 480
    canvas_h: int = 480
    n_min: int = 3
    n_max: int = 8
    s_min: int = 32
    s_max: int = 128
    max_iou: float = 0.1

    def __post_init__(self):
        if self.n_min < 0 or self.n_max < self.n_min:
            raise ValueError(f"bad icon count range [{self.n_min}, {self.n_max}]")
        if self.s_min < 8:
            raise ValueError(f"s_min must be >= 8, got {self.s_min}")
        if self.s_max < self.s_min or self.s_max > min(self.canvas_w, self.canvas_h):
            raise ValueError(f"bad icon size range [{self.s_min}, {self.s_max}]")
        if not (0.0 <= self.max_iou <= 1.0):
            raise ValueError(f"max_iou must be in [0, 1], got {self.max_iou}")


@dataclass(frozen=True, slots=True)
class Annotation:
    class_id: int
    bbox: BBox


MAX_PLACE_ATTEMPTS = 100


def _resize_nearest(icon: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Nearest-neighbor resize via integer index maps: src = floor(dst*old/new)."""
    h, w = icon.shape[:2]
    rows = (np.arange(new_h) * h) // new_h
    cols = (np.arange(new_w) * w) // new_w
    return icon[rows][:, cols]


def _scaled_dims(w: int, h: int, longest: int) -> tuple[int, int]:
    """Aspect-preserving dims with the longest side set to `longest`.

    The short side uses round-half-up integer arithmetic and never drops
    below 1 pixel.
    """
    if w >= h:
        return longest, max(1, (2 * h * longest + w) // (2 * w))
    return max(1, (2 * w * longest + h) // (2 * h)), longest


def _paste(canvas: np.ndarray, icon: np.ndarray, x: int, y: int) -> None:
    """Alpha-composite an RGBA icon onto the RGB canvas, integer arithmetic only."""
    h, w = icon.shape[:2]
    region = canvas[y : y + h, x : x + w].astype(np.int64)
    rgb = icon[:, :, :3].astype(np.int64)
    alpha = icon[:, :, 3:4].astype(np.int64)
    blended = (rgb * alpha + region * (255 - alpha) + 127) // 255
    canvas[y : y + h, x : x + w] = blended.astype(np.uint8)


def compose_scene(
    spec: SceneSpec, lib: IconLibrary, rng: Rng
) -> tuple[np.ndarray, list[Annotation], int]:
    """Render one scene; returns (HxWx3 uint8 image, annotations, n_skipped).

    Draw order is fixed: icon count; then per icon class, variant, size,
    and up to MAX_PLACE_ATTEMPTS candidate positions. An icon whose box
    cannot satisfy the pairwise IoU cap is skipped, not an error.
    """
    canvas = np.full((spec.canvas_h, spec.canvas_w, 3), 255, dtype=np.uint8)
    annotations: list[Annotation] = []
    n_skipped = 0
    n_icons = rng.next_int(spec.n_min, spec.n_max)
    for _ in range(n_icons):
        class_id = rng.next_below(lib.n_classes)
        variants = lib.variants(class_id)
        icon = variants[rng.next_below(len(variants))]
        longest = rng.next_int(spec.s_min, spec.s_max)
        w, h = _scaled_dims(icon.shape[1], icon.shape[0], longest)
        placed = False
        for _ in range(MAX_PLACE_ATTEMPTS):
            x = rng.next_below(spec.canvas_w - w + 1)
            y = rng.next_below(spec.canvas_h - h + 1)
            box = BBox(x, y, x + w, y + h)
            if all(iou(box, a.bbox) <= spec.max_iou for a in annotations):
                _paste(canvas, _resize_nearest(icon, w, h), x, y)
                annotations.append(Annotation(class_id=class_id, bbox=box))
                placed = True
                break
        if not placed:
            n_skipped += 1
    return canvas, annotations, n_skipped


def write_label_file(annotations, canvas_w: int, canvas_h: int, path) -> None:
    """Write detector-format labels: one "class cx cy w h" line per annotation,
    center/size normalized by the canvas, fixed 6-decimal printing."""
    lines = []
    for a in annotations:
        b = a.bbox
        cx = (b.x1 + b.x2) / 2.0 / canvas_w
        cy = (b.y1 + b.y2) / 2.0 / canvas_h
        w = b.width / canvas_w
        h = b.height / canvas_h
        lines.append(f"{a.class_id} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}\n")
    with open(path, "w", encoding="utf-8") as f:
        f.writelines(lines)


def read_label_file(path, canvas_w: int, canvas_h: int) -> list[Annotation]:
    """Inverse of write_label_file: denormalize lines back to integer boxes."""
    annotations = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            class_id = int(parts[0])
            cx, cy, w, h = (float(v) for v in parts[1:])
            x1 = round((cx - w / 2) * canvas_w)
            y1 = round((cy - h / 2) * canvas_h)
            x2 = round((cx + w / 2) * canvas_w)
            y2 = round((cy + h / 2) * canvas_h)
            annotations.append(Annotation(class_id=class_id, bbox=BBox(x1, y1, x2, y2)))
    return annotations


@dataclass(frozen=True, slots=True)
class DatasetIndex:
    scenes: tuple[dict, ...]
    n_annotations: int
    n_skipped: int

    def to_json(self) -> dict:
        return {
            "scenes": list(self.scenes),
            "n_annotations": self.n_annotations,
            "n_skipped": self.n_skipped,
        }


def _generate_one(i: int, spec: SceneSpec, lib: IconLibrary, master_seed: int, out_dir: Path) -> dict:
    rng = Rng(derive_seed(master_seed, i))
    canvas, annotations, n_skipped = compose_scene(spec, lib, rng)
    image_name = f"scene_{i:06d}.png"
    label_name = f"scene_{i:06d}.txt"
    Image.fromarray(canvas).save(out_dir / image_name)
    write_label_file(annotations, spec.canvas_w, spec.canvas_h, out_dir / label_name)
    return {
        "image": image_name,
        "label": label_name,
        "n_annotations": len(annotations),
        "n_skipped": n_skipped,
    }


def synth_dataset(
    count: int,
    spec: SceneSpec,
    lib: IconLibrary,
    master_seed: int,
    out_dir,
    jobs: int = 1,
) -> DatasetIndex:
    """Generate `count` scenes under out_dir; scene i is seeded by
    derive_seed(master_seed, i), so scenes are independent of generation
    order and of `jobs`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if jobs > 1 and count > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scenes = list(
                pool.map(lambda i: _generate_one(i, spec, lib, master_seed, out), range(count))
            )
    else:
        scenes = [_generate_one(i, spec, lib, master_seed, out) for i in range(count)]
    index = DatasetIndex(
        scenes=tuple(scenes),
        n_annotations=sum(s["n_annotations"] for s in scenes),
        n_skipped=sum(s["n_skipped"] for s in scenes),
    )
    with open(out / "index.json", "w", encoding="utf-8") as f:
        json.dump(index.to_json(), f, indent=2)
    return index
