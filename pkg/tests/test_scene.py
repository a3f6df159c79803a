import numpy as np
import pytest
from PIL import Image

from puzzlekit.core import BBox, iou
from puzzlekit.rng import Rng, derive_seed
from puzzlekit.scene import (
    Annotation,
    IconLibrary,
    SceneSpec,
    compose_scene,
    load_icon_library,
    make_icon_set,
    read_label_file,
    synth_dataset,
    write_label_file,
    _resize_nearest,
    _scaled_dims,
)


@pytest.fixture(scope="module")
def lib():
    return make_icon_set(5)


def test_make_icon_set_shapes(lib):
    assert lib.n_classes == 5
    assert lib.classes == sorted(lib.classes)
    for cid in range(5):
        for icon in lib.variants(cid):
            assert icon.dtype == np.uint8
            assert icon.ndim == 3 and icon.shape[2] == 4
            assert icon[:, :, 3].max() == 255  # something opaque to paste


def test_make_icon_set_deterministic():
    a = make_icon_set(3, seed=9)
    b = make_icon_set(3, seed=9)
    for cid in range(3):
        for u, v in zip(a.variants(cid), b.variants(cid)):
            np.testing.assert_array_equal(u, v)


def test_load_icon_library(tmp_path):
    for name, color in (("zebra", (10, 20, 30)), ("ant", (200, 0, 0))):
        d = tmp_path / name
        d.mkdir()
        arr = np.zeros((12, 12, 4), dtype=np.uint8)
        arr[:, :, :3] = color
        arr[3:9, 3:9, 3] = 255
        Image.fromarray(arr, "RGBA").save(d / "v0.png")
    lib = load_icon_library(tmp_path)
    assert lib.classes == ["ant", "zebra"]  # lexicographic class ids
    assert lib.class_id("zebra") == 1
    assert lib.variants(0)[0].shape == (12, 12, 4)


def test_load_icon_library_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        load_icon_library(tmp_path)


def test_resize_nearest_exact_pixels():
    src = np.arange(16, dtype=np.uint8).reshape(2, 2, 4)
    out = _resize_nearest(src, 4, 4)
    assert out.shape == (4, 4, 4)
    # each source pixel becomes a 2x2 block
    np.testing.assert_array_equal(out[:2, :2], np.broadcast_to(src[0, 0], (2, 2, 4)))
    np.testing.assert_array_equal(out[2:, 2:], np.broadcast_to(src[1, 1], (2, 2, 4)))


def test_scaled_dims_round_half_up():
    # 3:1 aspect at longest side 10 -> short side round(10/3) = 3
    assert _scaled_dims(30, 10, 10) == (10, 3)
    assert _scaled_dims(10, 30, 10) == (3, 10)
    # round-half-up: 2*h*S + w over 2w with h/w = 1/4, S=10 -> 2.5 -> 3
    assert _scaled_dims(40, 10, 10) == (10, 3)
    assert _scaled_dims(7, 7, 12) == (12, 12)


def test_compose_scene_deterministic(lib):
    spec = SceneSpec()
    img1, anns1, sk1 = compose_scene(spec, lib, Rng(55))
    img2, anns2, sk2 = compose_scene(spec, lib, Rng(55))
    np.testing.assert_array_equal(img1, img2)
    assert anns1 == anns2 and sk1 == sk2
    img3, _, _ = compose_scene(spec, lib, Rng(56))
    assert not np.array_equal(img1, img3)


def test_compose_scene_bounds_and_count(lib):
    spec = SceneSpec(n_min=3, n_max=8)
    for seed in range(20):
        img, anns, skipped = compose_scene(spec, lib, Rng(seed))
        assert img.shape == (spec.canvas_h, spec.canvas_w, 3)
        assert img.dtype == np.uint8
        assert len(anns) + skipped <= spec.n_max
        assert len(anns) >= 1
        for a in anns:
            assert 0 <= a.bbox.x1 < a.bbox.x2 <= spec.canvas_w
            assert 0 <= a.bbox.y1 < a.bbox.y2 <= spec.canvas_h
            assert 0 <= a.class_id < lib.n_classes


def test_compose_scene_respects_iou_cap(lib):
    spec = SceneSpec(max_iou=0.1, n_min=6, n_max=8)
    for seed in range(30):
        _, anns, skipped = compose_scene(spec, lib, Rng(seed))
        if skipped:
            continue
        for i, a in enumerate(anns):
            for b in anns[i + 1:]:
                assert iou(a.bbox, b.bbox) <= 0.1 + 1e-12


def test_compose_scene_crowding_skips(lib):
    # a canvas too small for eight large icons must trip the attempt cap
    spec = SceneSpec(canvas_w=96, canvas_h=96, n_min=8, n_max=8,
                     s_min=40, s_max=48, max_iou=0.0)
    skipped_total = sum(compose_scene(spec, lib, Rng(s))[2] for s in range(5))
    assert skipped_total > 0


def test_label_file_known_line(tmp_path):
    # box (10, 20, 60, 120) on a 480x480 canvas, class 3
    anns = [Annotation(class_id=3, bbox=BBox(10, 20, 60, 120))]
    path = tmp_path / "labels.txt"
    write_label_file(anns, 480, 480, path)
    assert path.read_text() == "3 0.072917 0.145833 0.104167 0.208333\n"


def test_label_round_trip_within_half_pixel(lib, tmp_path):
    spec = SceneSpec()
    path = tmp_path / "rt.txt"
    for seed in range(25):
        _, anns, _ = compose_scene(spec, lib, Rng(seed))
        write_label_file(anns, spec.canvas_w, spec.canvas_h, path)
        back = read_label_file(path, spec.canvas_w, spec.canvas_h)
        assert len(back) == len(anns)
        for orig, rt in zip(anns, back):
            assert rt.class_id == orig.class_id
            for got, want in zip(rt.bbox.as_tuple(), orig.bbox.as_tuple()):
                assert abs(got - want) <= 0.5


def test_read_label_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0 0.5 0.5 0.1\n")
    with pytest.raises(ValueError):
        read_label_file(path, 480, 480)


def test_synth_dataset_layout_and_determinism(lib, tmp_path):
    spec = SceneSpec(canvas_w=96, canvas_h=96, n_min=1, n_max=4, s_min=12, s_max=30)
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    idx1 = synth_dataset(8, spec, lib, 777, out1)
    idx2 = synth_dataset(8, spec, lib, 777, out2)
    assert len(idx1.scenes) == 8
    assert (out1 / "index.json").exists()
    for entry in idx1.scenes:
        assert (out1 / entry["image"]).exists()
        assert (out1 / entry["label"]).exists()
    for e1, e2 in zip(idx1.scenes, idx2.scenes):
        assert e1 == e2
        assert (out1 / e1["image"]).read_bytes() == (out2 / e2["image"]).read_bytes()
        assert (out1 / e1["label"]).read_bytes() == (out2 / e2["label"]).read_bytes()


def test_synth_dataset_jobs_equivalent(lib, tmp_path):
    spec = SceneSpec(canvas_w=96, canvas_h=96, n_min=1, n_max=4, s_min=12, s_max=30)
    seq, par = tmp_path / "seq", tmp_path / "par"
    synth_dataset(6, spec, lib, 31, seq, jobs=1)
    synth_dataset(6, spec, lib, 31, par, jobs=3)
    for i in range(6):
        name = f"scene_{i:06d}"
        assert (seq / f"{name}.png").read_bytes() == (par / f"{name}.png").read_bytes()
        assert (seq / f"{name}.txt").read_bytes() == (par / f"{name}.txt").read_bytes()


def test_scene_seeds_are_independent(lib):
    # scene i depends only on derive_seed(master, i), not on loop position
    spec = SceneSpec()
    img_direct, anns_direct, _ = compose_scene(spec, lib, Rng(derive_seed(500, 3)))
    img_again, anns_again, _ = compose_scene(spec, lib, Rng(derive_seed(500, 3)))
    np.testing.assert_array_equal(img_direct, img_again)
    assert anns_direct == anns_again


def test_scene_spec_validation():
    with pytest.raises(ValueError):
        SceneSpec(s_min=4)
    with pytest.raises(ValueError):
        SceneSpec(n_min=-1)
    with pytest.raises(ValueError):
        SceneSpec(n_min=5, n_max=4)
    with pytest.raises(ValueError):
        SceneSpec(s_min=64, s_max=32)
    with pytest.raises(ValueError):
        SceneSpec(max_iou=-0.5)


def test_icon_library_rejects_mismatched_channels():
    with pytest.raises(ValueError):
        IconLibrary(["a"], {"a": [np.zeros((8, 8, 3), dtype=np.uint8)]})
