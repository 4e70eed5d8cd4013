import math

import numpy as np
import pytest

from roadside3d.errors import ConfigError
from roadside3d.geometry import Box2D, Box3D
from roadside3d.io import parse_calib, parse_labels
from roadside3d.metrics import Annotation, evaluate
from roadside3d.synth import (
    DEFAULT_NOISE, SIZE_MEAN, NoiseModel, SceneConfig, camera_plane, format_statistics,
    generate_scene, parse_noise_model, parse_scene_config, perturb, scene_statistics, write_scene,
)


@pytest.fixture(scope="module")
def scene():
    return generate_scene(SceneConfig(seed=42, n_frames=40))


def test_deterministic(scene):
    again = generate_scene(SceneConfig(seed=42, n_frames=40))
    assert again.frames == scene.frames and again.planes == scene.planes
    assert again.cameras == scene.cameras
    other = generate_scene(SceneConfig(seed=43, n_frames=40))
    assert other.frames != scene.frames


def test_frames_independent_of_count():
    short = generate_scene(SceneConfig(seed=9, n_frames=3))
    long = generate_scene(SceneConfig(seed=9, n_frames=10))
    for fid in short.frames:
        assert short.frames[fid] == long.frames[fid]


def test_byte_identical_trees(tmp_path):
    cfg = SceneConfig(seed=1, n_frames=4)
    for name in ("a", "b"):
        s = generate_scene(cfg)
        write_scene(s, tmp_path / name, perturb(s.frames, DEFAULT_NOISE, 1, scene=s, scene_cfg=cfg))
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.txt"))
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*.txt"))
    assert files_a == files_b and len(files_a) == 12
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_pitch_zero_plane():
    s = generate_scene(SceneConfig(seed=2, n_frames=5, pitch_range=(0.0, 0.0),
                                   camera_height_range=(6.0, 6.0)))
    for plane in s.planes.values():
        np.testing.assert_allclose(plane.coefficients, (0, 1, 0, -6), atol=1e-9)
    assert camera_plane(5.0, 0.0).coefficients == (0.0, 1.0, 0.0, -5.0)


def test_bottom_face_on_plane(scene):
    worst = 0.0
    for fid, anns in scene.frames.items():
        plane = scene.planes[fid]
        for a in anns:
            if a.box3d is not None:
                worst = max(worst, abs(plane.signed_distance(a.box3d.bottom_center)))
    assert worst <= 1e-9


def test_objects_do_not_overlap_and_are_in_view(scene):
    from roadside3d.metrics import rotated_iou_bev
    for fid, anns in scene.frames.items():
        cam = scene.cameras[fid]
        boxes = [a.box3d for a in anns if a.box3d is not None]
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                assert rotated_iou_bev(boxes[i], boxes[j]) == 0.0
        for a in anns:
            b = a.box2d
            assert b.xmax > 0 and b.ymax > 0 and b.xmin < cam.width and b.ymin < cam.height


def test_sizes_respect_minimum():
    cfg = SceneConfig(seed=3, n_frames=20, size_std={**SIZE_MEAN})   # std == mean: many draws < 0
    for anns in generate_scene(cfg).frames.values():
        for a in anns:
            if a.box3d is not None:
                assert min(a.box3d.length, a.box3d.width, a.box3d.height) >= 0.1


def test_labels_are_valid_levels(scene):
    occ = {a.occlusion for anns in scene.frames.values() for a in anns}
    trunc = {a.truncation for anns in scene.frames.values() for a in anns}
    assert occ <= {0, 1, 2} and trunc <= {0, 1, 2}
    assert len(occ) > 1


@pytest.mark.parametrize("kwargs", [
    dict(camera_height_range=(5.0, 4.0)), dict(n_frames=-1), dict(seed=-1),
    dict(category_weights={"car": 0.5}), dict(depth_spread=0.0),
    dict(size_std={**SIZE_MEAN, "car": (-1.0, 0.1, 0.1)}),
])
def test_config_errors(kwargs):
    with pytest.raises(ConfigError):
        SceneConfig(**kwargs)


def test_noise_model_validation():
    with pytest.raises(ConfigError):
        NoiseModel(drop_prob=1.5)
    with pytest.raises(ConfigError):
        NoiseModel(yaw_sigma=-0.1)


# -- perturbation -------------------------------------------------------------------------------

def test_zero_noise_is_identity(scene):
    dets = perturb(scene.frames, NoiseModel(), 7, scene=scene)
    for fid, anns in scene.frames.items():
        with3d = [a for a in anns if a.box3d is not None]
        assert len(dets[fid]) == len(with3d)
        for d, a in zip(dets[fid], with3d):
            assert d.score == 1.0 and d.category == a.category
            assert (d.box3d.length, d.box3d.width, d.box3d.height, d.box3d.yaw) == \
                (a.box3d.length, a.box3d.width, a.box3d.height, a.box3d.yaw)
            assert max(abs(p - q) for p, q in zip(d.box3d.center, a.box3d.center)) <= 1e-12


def test_zero_noise_end_to_end_identity(scene):
    rep = evaluate(scene.frames, perturb(scene.frames, NoiseModel(), 7, scene=scene),
                   planes=scene.planes)
    for c in rep.cells.values():
        assert c.ap == 100.0
        assert min(c.acs, c.aos, c.aas, c.ags) >= 1 - 1e-12


def test_drop_all(scene):
    dets = perturb(scene.frames, NoiseModel(drop_prob=1.0), 7, scene=scene)
    assert all(d == [] for d in dets.values())


def test_perturb_deterministic_and_seeded(scene):
    a = perturb(scene.frames, DEFAULT_NOISE, 5, scene=scene)
    assert a == perturb(scene.frames, DEFAULT_NOISE, 5, scene=scene)
    assert a != perturb(scene.frames, DEFAULT_NOISE, 6, scene=scene)


def test_clutter_scores_are_low(scene):
    dets = perturb(scene.frames, NoiseModel(drop_prob=1.0, clutter_rate=3.0), 5, scene=scene)
    scores = [d.score for ds in dets.values() for d in ds]
    assert scores and max(scores) < 0.3
    mean = len(scores) / len(dets)
    assert 2.0 < mean < 4.0


def test_score_decreases_with_error():
    box = Box3D((0, 4, 30), 4, 2, 1.5)
    gts = {"f": [Annotation("f", "car", 0, 0, Box2D(0, 0, 1, 1), box)] * 200}
    dets = perturb(gts, NoiseModel(center_sigma=1.0), 0)["f"]
    err = [math.hypot(d.box3d.center[0], d.box3d.center[2] - 30) for d in dets]
    order = np.argsort(err)
    assert all(dets[order[i]].score >= dets[order[i + 1]].score for i in range(len(dets) - 1))


# -- statistics ------------------------------------------------------------------------------

def ann_at(z, fid="f"):
    return Annotation(fid, "car", 0, 0, Box2D(0, 0, 1, 1), Box3D((0, 4, z), 4, 2, 1.5))


def test_stats_single_frame():
    st = scene_statistics({"f": [ann_at(10), ann_at(20), ann_at(30)]})
    assert st.density_3d == 3 and st.density_2d == 3


def test_stats_depth_histogram_single_bin():
    st = scene_statistics({"a": [ann_at(65)] * 4, "b": [ann_at(65)]})
    assert st.depth_histogram == {60: 5}


def test_stats_density_matches_config():
    s = generate_scene(SceneConfig(seed=4, n_frames=300))
    st = scene_statistics(s.frames)
    assert abs(st.density_3d - 24) <= 0.5
    assert abs(st.density_2d - 34) <= 0.5
    text = format_statistics(st)
    assert "objects per frame: 2D" in text and "3D" in text


def test_default_depth_mode():
    s = generate_scene(SceneConfig(seed=5, n_frames=100))
    z = [a.box3d.center[2] for anns in s.frames.values() for a in anns if a.box3d is not None]
    hist, edges = np.histogram(z, bins=np.arange(0, 160, 10))
    assert edges[np.argmax(hist)] in (60, 70)


# -- config files ---------------------------------------------------------------------------

def test_scene_config_file():
    text = """
    # small test scene
    seed = 77
    frames = 3
    camera_height_range = 5 6
    pitch_range_deg = 6 8
    weight.car = 0.7
    weight.pedestrian = 0.3
    noise.yaw_sigma = 0.05
    """
    cfg = parse_scene_config(text, n_frames=2)
    assert cfg.seed == 77 and cfg.n_frames == 2
    assert cfg.camera_height_range == (5.0, 6.0)
    assert cfg.pitch_range == pytest.approx((math.radians(6), math.radians(8)))
    assert cfg.category_weights == {"car": 0.7, "pedestrian": 0.3}
    noise = parse_noise_model(text, DEFAULT_NOISE)
    assert noise.yaw_sigma == 0.05 and noise.center_sigma == DEFAULT_NOISE.center_sigma


def test_written_tree_parses(tmp_path):
    cfg = SceneConfig(seed=8, n_frames=2)
    s = generate_scene(cfg)
    write_scene(s, tmp_path)
    for fid in s.frames:
        parsed = parse_labels((tmp_path / "label_2" / f"{fid}.txt").read_text(), fid)
        assert len(parsed) == len(s.frames[fid])
        cam, plane, _ = parse_calib((tmp_path / "calib" / f"{fid}.txt").read_text())
        assert cam == s.cameras[fid] and plane == s.planes[fid]
        # resting on the plane survives the text round trip
        for a in parsed:
            if a.box3d is not None:
                assert abs(plane.signed_distance(a.box3d.bottom_center)) < 1e-9
