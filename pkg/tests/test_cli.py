"""End-to-end tests of the command line entry point (in-process)."""

import json

import pytest

from puzzlekit.cli import main


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f)


@pytest.fixture
def instances_file(tmp_path):
    path = tmp_path / "instances.jsonl"
    rows = []
    for iid in range(3):
        rows.append({
            "puzzle_id": 1, "instance_id": iid, "image": f"p1_{iid}.png",
            "question": f"How many discs are there in picture {iid}?",
            "options": ["1", "2", "3", "4", "5"], "answer": "B",
        })
        rows.append({
            "puzzle_id": 2, "instance_id": iid, "image": f"p2_{iid}.png",
            "question": "What is the sum of the two dice?",
            "options": ["2", "4", "6", "8", "10"], "answer": "C",
        })
    _write_jsonl(path, rows)
    return path


# ---------------------------------------------------------------- synth

def test_synth_toy_icons(tmp_path, capsys):
    out = tmp_path / "scenes"
    rc = main(["--seed", "7", "synth", "--toy-icons", "3", "--out", str(out),
               "--count", "4", "--canvas", "96", "--n-min", "1", "--n-max", "3",
               "--s-min", "16", "--s-max", "32"])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert str(out / "index.json") in stdout
    assert "scenes=4" in stdout
    assert (out / "index.json").exists()
    for i in range(4):
        assert (out / f"scene_{i:06d}.png").exists()
        assert (out / f"scene_{i:06d}.txt").exists()


def test_synth_two_runs_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        rc = main(["--seed", "3", "synth", "--toy-icons", "2", "--out", str(out),
                   "--count", "3", "--canvas", "64", "--n-min", "1", "--n-max", "2",
                   "--s-min", "12", "--s-max", "20"])
        assert rc == 0
        outs.append(out)
    a, b = outs
    for i in range(3):
        name = f"scene_{i:06d}"
        assert (a / f"{name}.png").read_bytes() == (b / f"{name}.png").read_bytes()
        assert (a / f"{name}.txt").read_text() == (b / f"{name}.txt").read_text()


def test_synth_requires_an_icon_source(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--out", str(tmp_path / "x")])
    assert exc.value.code == 2


def test_synth_rejects_bad_geometry(tmp_path):
    rc = main(["synth", "--toy-icons", "2", "--out", str(tmp_path / "x"),
               "--count", "1", "--s-min", "4"])  # below the minimum icon size
    assert rc == 1


# ---------------------------------------------------------------- classify

def test_classify_rule_backend(tmp_path, instances_file, capsys):
    rc = main(["--seed", "0", "classify", "--instances", str(instances_file),
               "--backend", "rule", "--k", "3"])
    assert rc == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines() if l]
    assert [r["puzzle_id"] for r in lines] == [1, 2]
    by_pid = {r["puzzle_id"]: r for r in lines}
    assert by_pid[1]["type"] == "counting"
    assert by_pid[2]["type"] == "arithmetic"
    for r in lines:
        assert set(r) == {"puzzle_id", "type", "tally", "unparseable"}
        assert r["unparseable"] == 0


def test_classify_out_file_matches_stdout(tmp_path, instances_file, capsys):
    out = tmp_path / "types.jsonl"
    rc = main(["--seed", "5", "classify", "--instances", str(instances_file),
               "--k", "2", "--out", str(out)])
    assert rc == 0
    capsys.readouterr()
    rc = main(["--seed", "5", "classify", "--instances", str(instances_file),
               "--k", "2"])
    assert rc == 0
    assert out.read_text() == capsys.readouterr().out


def test_classify_missing_instances_file(tmp_path):
    rc = main(["classify", "--instances", str(tmp_path / "nope.jsonl")])
    assert rc == 1


def test_classify_unknown_backend(instances_file):
    rc = main(["classify", "--instances", str(instances_file),
               "--backend", "psychic"])
    assert rc == 1


# ---------------------------------------------------------------- template

@pytest.fixture
def types_file(tmp_path):
    path = tmp_path / "types.jsonl"
    _write_jsonl(path, [{"puzzle_id": 1, "type": "counting"},
                        {"puzzle_id": 2, "type": "arithmetic"}])
    return path


def test_template_without_detections(tmp_path, instances_file, types_file, capsys):
    rc = main(["template", "--instances", str(instances_file),
               "--types", str(types_file), "--verify"])
    assert rc == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines() if l]
    assert len(lines) == 6
    first = lines[0]
    assert set(first) == {"puzzle_id", "instance_id", "template"}
    assert first["template"].startswith("Question type: counting. Objects: none. ")
    assert "Ocr text: none. " in first["template"]
    assert first["template"].endswith("E: 5.")


def test_template_with_detections_and_ocr(tmp_path, instances_file, types_file, capsys):
    det_dir = tmp_path / "det"
    ocr_dir = tmp_path / "ocr"
    det_dir.mkdir()
    ocr_dir.mkdir()
    # files are matched to instances by image basename
    _write_json(det_dir / "p1_0.json", {
        "image": "p1_0.png", "width": 100, "height": 100,
        "detections": [{"class": "disc", "bbox": [10, 10, 30, 30], "score": 0.9}],
    })
    _write_json(ocr_dir / "p1_0.json", {
        "image": "p1_0.png",
        "spans": [{"text": "3", "bbox": [40, 40, 50, 50], "score": 0.8}],
    })
    out = tmp_path / "templates.jsonl"
    rc = main(["template", "--instances", str(instances_file),
               "--types", str(types_file), "--det-dir", str(det_dir),
               "--ocr-dir", str(ocr_dir), "--out", str(out), "--verify"])
    assert rc == 0
    rows = [json.loads(l) for l in out.read_text().splitlines() if l]
    with_det = next(r for r in rows if (r["puzzle_id"], r["instance_id"]) == (1, 0))
    assert "Objects: disc[10,10,30,30]. " in with_det["template"]
    assert "Ocr text:3[40,40,50,50]. " in with_det["template"]
    others = [r for r in rows if (r["puzzle_id"], r["instance_id"]) != (1, 0)]
    assert all("Objects: none. " in r["template"] for r in others)


def test_template_unclassified_puzzle_fails(tmp_path, instances_file):
    partial = tmp_path / "partial.jsonl"
    _write_jsonl(partial, [{"puzzle_id": 1, "type": "counting"}])
    rc = main(["template", "--instances", str(instances_file),
               "--types", str(partial)])
    assert rc == 1


# ---------------------------------------------------------------- eval

@pytest.fixture
def eval_fixture(tmp_path):
    manifest = tmp_path / "manifest.json"
    _write_json(manifest, [
        {"puzzle_id": 1, "weight": 1.0, "modality": "text"},
        {"puzzle_id": 2, "weight": 2.0, "modality": "vl"},
        {"puzzle_id": 3, "weight": 3.0, "modality": "vl"},
    ])
    predictions = tmp_path / "predictions.jsonl"
    _write_jsonl(predictions, [
        {"puzzle_id": 1, "instance_id": 0, "predicted": "A", "answer": "A"},
        {"puzzle_id": 2, "instance_id": 0, "predicted": "B", "answer": "C"},
        {"puzzle_id": 3, "instance_id": 0, "predicted": "E", "answer": "E"},
    ])
    return manifest, predictions


def test_eval_table(eval_fixture, capsys):
    manifest, predictions = eval_fixture
    rc = main(["eval", "--predictions", str(predictions),
               "--manifest", str(manifest)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "tot_wosa" in out
    # weights 1,2,3 with hits 1,0,1 -> 100*4/6
    assert "66.67" in out


def test_eval_json_and_json_out(eval_fixture, tmp_path, capsys):
    manifest, predictions = eval_fixture
    json_out = tmp_path / "report.json"
    rc = main(["eval", "--predictions", str(predictions),
               "--manifest", str(manifest), "--format", "json",
               "--json-out", str(json_out)])
    assert rc == 0
    stdout_report = json.loads(capsys.readouterr().out)
    file_report = json.loads(json_out.read_text())
    assert stdout_report == file_report
    assert stdout_report["tot_wosa"] == pytest.approx(200.0 / 3.0)
    assert stdout_report["counts"] == {"text": 1, "vl": 2, "total": 3}


def test_eval_unknown_puzzle_fails(eval_fixture, tmp_path):
    manifest, _ = eval_fixture
    bad = tmp_path / "bad.jsonl"
    _write_jsonl(bad, [{"puzzle_id": 99, "instance_id": 0,
                        "predicted": "A", "answer": "A"}])
    rc = main(["eval", "--predictions", str(bad), "--manifest", str(manifest)])
    assert rc == 1


def test_eval_empty_predictions_fails(eval_fixture, tmp_path):
    manifest, _ = eval_fixture
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    rc = main(["eval", "--predictions", str(empty), "--manifest", str(manifest)])
    assert rc == 1


# ---------------------------------------------------------------- train

def test_train_tiny_run(tmp_path, capsys):
    ckpt = tmp_path / "enc.npz"
    report_path = tmp_path / "report.json"
    rc = main(["--seed", "0", "train", "--toy-icons", "3", "--scenes", "30",
               "--steps", "5", "--batch-size", "8",
               "--checkpoint", str(ckpt), "--report", str(report_path)])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "train_accuracy=" in stdout
    assert "val_accuracy=" in stdout
    assert "backbone_unchanged=True" in stdout
    assert ckpt.exists()
    report = json.loads(report_path.read_text())
    assert len(report["losses"]) == 5
    assert report["initial_loss"] == pytest.approx(1.6094379124341003)
    assert report["checksum_before"] == report["checksum_after"]


def test_train_requires_an_icon_source():
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 2


# ---------------------------------------------------------------- gradcheck

def test_gradcheck_passes(capsys):
    rc = main(["--seed", "11", "gradcheck", "--configs", "2"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "config 0: max_rel_err=" in out
    assert "config 1: max_rel_err=" in out
    assert out.strip().endswith("OK")


def test_gradcheck_fails_on_absurd_tolerance(capsys):
    rc = main(["--seed", "11", "gradcheck", "--configs", "1",
               "--tolerance", "1e-18"])
    assert rc == 1
    assert capsys.readouterr().out.strip().endswith("FAIL")


# ---------------------------------------------------------------- config file

def test_config_file_and_flag_precedence(tmp_path, capsys):
    config = tmp_path / "config.json"
    _write_json(config, {"seed": 9, "synth": {"count": 2, "canvas": 64,
                                              "n_min": 1, "n_max": 2,
                                              "s_min": 12, "s_max": 20}})
    out = tmp_path / "scenes"
    # flag wins over the config file for count; canvas comes from the file
    rc = main(["--config", str(config), "synth", "--toy-icons", "2",
               "--out", str(out), "--count", "3"])
    assert rc == 0
    assert "scenes=3" in capsys.readouterr().out
    index = json.loads((out / "index.json").read_text())
    assert len(index["scenes"]) == 3


def test_config_file_unknown_key_fails(tmp_path):
    config = tmp_path / "config.json"
    _write_json(config, {"synth": {"cnt": 2}})
    rc = main(["--config", str(config), "synth", "--toy-icons", "2",
               "--out", str(tmp_path / "x")])
    assert rc == 1
