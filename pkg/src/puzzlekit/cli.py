"""The `puzzlekit` command: every pipeline stage as a subcommand.

Data goes to files or stdout; logs (including the fully resolved
configuration of each run) go to stderr, so stages compose in shells.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path

from . import encoder as enc_mod
from . import evaluate as eval_mod
from .core import DEFAULT_TYPES, SchemaError, load_config, load_instances, load_manifest
from .qtype import ExecBackend, classify_puzzle, rule_backend
from .rng import Rng, derive_seed
from .scene import SceneSpec, load_icon_library, make_icon_set, synth_dataset
from .template import ingest_detections, ingest_ocr, make_model_input, build_model_input, parse_model_input

log = logging.getLogger("puzzlekit")

CONFIG_DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "type_list": list(DEFAULT_TYPES),
    "synth": {
        "count": 100,
        "canvas": 480,
        "n_min": 3,
        "n_max": 8,
        "s_min": 32,
        "s_max": 128,
        "max_iou": 0.1,
    },
    "classify": {"k": 100, "backend": "rule"},
    "template": {"verify": False},
    "train": {
        "scenes": 2000,
        "steps": 2000,
        "lr": 1e-2,
        "batch_size": 32,
        "head_only": False,
    },
    "eval": {"format": "table"},
}


def _resolve(args, section: str) -> dict:
    """defaults < config file < explicit flags, logged once resolved."""
    config = dict(CONFIG_DEFAULTS)
    if args.config:
        config = load_config(args.config, CONFIG_DEFAULTS)
    resolved = dict(config[section])
    resolved["seed"] = config["seed"]
    resolved["jobs"] = config["jobs"]
    resolved["type_list"] = tuple(config["type_list"])
    for key in list(resolved):
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
    log.info("resolved %s config: %s", section,
             json.dumps({k: list(v) if isinstance(v, tuple) else v
                         for k, v in resolved.items()}))
    return resolved


def cmd_synth(args) -> int:
    cfg = _resolve(args, "synth")
    if args.toy_icons:
        lib = make_icon_set(args.toy_icons, seed=cfg["seed"])
    else:
        lib = load_icon_library(args.icons)
    spec = SceneSpec(
        canvas_w=cfg["canvas"], canvas_h=cfg["canvas"],
        n_min=cfg["n_min"], n_max=cfg["n_max"],
        s_min=cfg["s_min"], s_max=cfg["s_max"], max_iou=cfg["max_iou"],
    )
    index = synth_dataset(cfg["count"], spec, lib, cfg["seed"], args.out,
                          jobs=cfg["jobs"])
    log.info("wrote %d scenes, %d annotations, %d skipped",
             len(index.scenes), index.n_annotations, index.n_skipped)
    print(str(Path(args.out) / "index.json"))
    print(f"scenes={len(index.scenes)} annotations={index.n_annotations} "
          f"skipped={index.n_skipped}")
    return 0


def _make_backend(spec: str):
    if spec == "rule":
        return rule_backend
    if spec.startswith("exec:"):
        return ExecBackend(shlex.split(spec[len("exec:"):]))
    raise ValueError(f"unknown backend {spec!r} (use 'rule' or 'exec:COMMAND')")


def cmd_classify(args) -> int:
    cfg = _resolve(args, "classify")
    backend = _make_backend(cfg["backend"])
    instances = load_instances(args.instances)
    by_puzzle: dict[int, list] = {}
    for inst in instances:
        by_puzzle.setdefault(inst.puzzle_id, []).append(inst)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for pid in sorted(by_puzzle):
            rng = Rng(derive_seed(cfg["seed"], pid))
            qtype, tally = classify_puzzle(
                backend, by_puzzle[pid], cfg["k"], rng,
                type_list=cfg["type_list"], jobs=cfg["jobs"],
            )
            record = {"puzzle_id": pid, "type": qtype, **tally.to_json()}
            out.write(json.dumps(record) + "\n")
    finally:
        if args.out:
            out.close()
    log.info("classified %d puzzles", len(by_puzzle))
    return 0


def _load_type_map(path) -> dict[int, str]:
    types: dict[int, str] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                row = json.loads(line)
                types[row["puzzle_id"]] = row["type"]
    return types


def cmd_template(args) -> int:
    cfg = _resolve(args, "template")
    instances = load_instances(args.instances)
    type_map = _load_type_map(args.types)
    det_dir = Path(args.det_dir) if args.det_dir else None
    ocr_dir = Path(args.ocr_dir) if args.ocr_dir else None
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for inst in instances:
            if inst.puzzle_id not in type_map:
                raise ValueError(
                    f"instance ({inst.puzzle_id}, {inst.instance_id}): "
                    f"puzzle {inst.puzzle_id} has no classified type"
                )
            stem = Path(inst.image_path).stem if inst.image_path else ""
            detections = []
            spans = []
            if det_dir and stem and (det_dir / f"{stem}.json").exists():
                detections = list(ingest_detections(det_dir / f"{stem}.json").detections)
            if ocr_dir and stem and (ocr_dir / f"{stem}.json").exists():
                spans = list(ingest_ocr(ocr_dir / f"{stem}.json").spans)
            mi = make_model_input(type_map[inst.puzzle_id], detections, spans,
                                  inst.question, inst.options)
            text = build_model_input(mi)
            if cfg["verify"] and parse_model_input(text) != mi:
                raise ValueError(
                    f"instance ({inst.puzzle_id}, {inst.instance_id}): "
                    "template did not round-trip"
                )
            out.write(json.dumps({
                "puzzle_id": inst.puzzle_id,
                "instance_id": inst.instance_id,
                "template": text,
            }) + "\n")
    finally:
        if args.out:
            out.close()
    log.info("templated %d instances", len(instances))
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(args, "train")
    econfig = enc_mod.EncoderConfig(type_list=cfg["type_list"])
    if args.toy_icons:
        lib = make_icon_set(args.toy_icons, seed=cfg["seed"])
    else:
        lib = load_icon_library(args.icons)
    log.info("building counting task: %d scenes", cfg["scenes"])
    dataset = enc_mod.make_counting_task(lib, cfg["scenes"],
                                         derive_seed(cfg["seed"], 0), econfig)
    encoder = enc_mod.init_encoder(econfig, derive_seed(cfg["seed"], 1))
    tc = enc_mod.TrainConfig(lr=cfg["lr"], steps=cfg["steps"],
                             batch_size=cfg["batch_size"],
                             seed=derive_seed(cfg["seed"], 2))
    try:
        report = enc_mod.train(encoder, dataset, tc, head_only=cfg["head_only"])
    except enc_mod.TrainingDiverged as e:
        _write_report(e.report, args.report)
        raise
    if args.checkpoint:
        enc_mod.save_checkpoint(encoder, args.checkpoint)
        log.info("checkpoint written to %s", args.checkpoint)
    _write_report(report, args.report)
    print(f"train_accuracy={report.train_accuracy:.4f} "
          f"val_accuracy={report.val_accuracy:.4f} "
          f"backbone_unchanged={report.checksum_before == report.checksum_after}")
    return 0


def _write_report(report, path) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(report.to_json(), f, indent=2)
        log.info("training report written to %s", path)


def cmd_eval(args) -> int:
    cfg = _resolve(args, "eval")
    manifest = load_manifest(args.manifest)
    records = eval_mod.load_predictions(args.predictions, manifest)
    if not records:
        raise ValueError("predictions file holds no records")
    report = eval_mod.split_report(records, manifest)
    print(eval_mod.render_report(report, cfg["format"]), end="")
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as f:
            f.write(eval_mod.render_report(report, "json"))
    return 0


def cmd_gradcheck(args) -> int:
    tol = args.tolerance
    rng = Rng(args.seed if args.seed is not None else 0)
    worst = 0.0
    for i in range(args.configs):
        config = enc_mod.sample_check_config(rng)
        rel, n = enc_mod.gradient_check(config, seed=rng.next_u64())
        worst = max(worst, rel)
        print(f"config {i}: max_rel_err={rel:.3e} over {n} coordinates")
    print(f"worst={worst:.3e} tolerance={tol:.1e} "
          f"{'OK' if worst <= tol else 'FAIL'}")
    return 0 if worst <= tol else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="puzzlekit",
        description="Icon-scene synthesis, question typing, template fusion, "
                    "adapter training, and weighted option scoring.",
    )
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--jobs", type=int, default=None, help="worker parallelism")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic icon-detection dataset")
    p.add_argument("--icons", help="icon library directory (class subdirs of PNGs)")
    p.add_argument("--toy-icons", type=int, metavar="N",
                   help="use N procedural icon classes instead of --icons")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--canvas", type=int, default=None)
    p.add_argument("--n-min", dest="n_min", type=int, default=None)
    p.add_argument("--n-max", dest="n_max", type=int, default=None)
    p.add_argument("--s-min", dest="s_min", type=int, default=None)
    p.add_argument("--s-max", dest="s_max", type=int, default=None)
    p.add_argument("--max-iou", dest="max_iou", type=float, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("classify", help="classify puzzle question types by majority vote")
    p.add_argument("--instances", required=True, help="JSON-lines instances file")
    p.add_argument("--backend", default=None, help="'rule' or 'exec:COMMAND'")
    p.add_argument("--k", type=int, default=None, help="instances sampled per puzzle")
    p.add_argument("--out", help="output JSON-lines file (default stdout)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("template", help="fuse types, detections, and OCR into model inputs")
    p.add_argument("--instances", required=True)
    p.add_argument("--types", required=True, help="classification records (JSON-lines)")
    p.add_argument("--det-dir", help="directory of per-image detection JSON files")
    p.add_argument("--ocr-dir", help="directory of per-image OCR JSON files")
    p.add_argument("--out", help="output JSON-lines file (default stdout)")
    p.add_argument("--verify", action="store_true", default=None,
                   help="re-parse every emitted template and require identity")
    p.set_defaults(func=cmd_template)

    p = sub.add_parser("train", help="train adapters + head on the icon-counting task")
    p.add_argument("--icons", help="icon library directory")
    p.add_argument("--toy-icons", type=int, metavar="N",
                   help="use N procedural icon classes instead of --icons")
    p.add_argument("--scenes", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--head-only", dest="head_only", action="store_true", default=None)
    p.add_argument("--checkpoint", help="output checkpoint path (.npz)")
    p.add_argument("--report", help="output training report path (JSON)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score predictions with the weighted metric")
    p.add_argument("--predictions", required=True, help="JSON-lines predictions file")
    p.add_argument("--manifest", required=True, help="puzzle manifest (JSON)")
    p.add_argument("--format", choices=("table", "json"), default=None)
    p.add_argument("--json-out", help="also write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of analytic gradients")
    p.add_argument("--configs", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("synth", "train") and not (args.icons or args.toy_icons):
        parser.error("one of --icons or --toy-icons is required")
    try:
        return args.func(args)
    except (OSError, ValueError, SchemaError, enc_mod.TrainingDiverged) as e:
        log.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
