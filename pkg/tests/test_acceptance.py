"""Numbered acceptance criteria, one test each.

The conftest hook prints a PASS/FAIL line per criterion with the measured
value at the end of the run. Tolerances are the published ones; nothing
here is loosened to make a criterion pass.
"""

import math
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from generators import (fuzz_inputs, random_annotation, random_calib, random_detection,
                        random_report, same_item)
from oracles import monte_carlo_bev_iou, sweep_ap
from roadside3d.cli import main
from roadside3d.errors import ParseError
from roadside3d.geometry import (INVALID, Box3D, CameraModel, GriddedGround, GroundPlane,
                                 fit_plane, ground_depth_map, gridded_depth_map)
from roadside3d.io import (LabelWarning, parse_calib, parse_depth_map, parse_eval_config,
                           parse_gridded, parse_labels, parse_report, serialize_calib,
                           serialize_labels, serialize_report)
from roadside3d.metrics import (MatchSet, PrCurve, EvalConfig, acs, ap_r40, evaluate,
                                orientation_similarity, rotated_iou_bev)
from roadside3d.synth import NoiseModel, SceneConfig, generate_scene, gts_as_detections, perturb

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def big_scene():
    """1000 frames with the default category mix (about 13k cars)."""
    return generate_scene(SceneConfig(seed=1000, n_frames=1000))


# 1 ----------------------------------------------------------------------------------------

@pytest.mark.acceptance(1, "metric identity on 200 synthetic frames (exact to 1e-9, < 10 s)")
def test_metric_identity(record_property):
    scene = generate_scene(SceneConfig(seed=1, n_frames=200))
    dets = gts_as_detections(scene.frames)
    t0 = time.perf_counter()
    rep = evaluate(scene.frames, dets, planes=scene.planes)
    elapsed = time.perf_counter() - t0
    worst = 0.0
    for c in rep.cells.values():
        worst = max(worst, abs(c.ap - 100), abs(c.rope_score - 100), c.agd,
                    *(abs(v - 1) for v in (c.acs, c.aos, c.aas, c.ags)))
    record_property("measured", f"{len(rep.cells)} cells, max deviation {worst:.1e}, {elapsed:.2f} s")
    assert rep.cells
    assert worst <= 1e-9
    assert elapsed < 10.0


# 2 -------------------------------------------------------------------------------------------

def _pair(rng):
    a = Box3D((rng.uniform(-2, 2), 0.0, rng.uniform(20, 24)), rng.uniform(0.3, 6),
              rng.uniform(0.3, 3), 1.5, rng.uniform(-math.pi, math.pi))
    if rng.random() < 0.9:   # mostly overlapping pairs; the rest anywhere nearby
        c = (a.center[0] + rng.uniform(-2, 2), 0.0, a.center[2] + rng.uniform(-2, 2))
    else:
        c = (rng.uniform(-6, 6), 0.0, rng.uniform(16, 28))
    b = Box3D(c, rng.uniform(0.3, 6), rng.uniform(0.3, 3), 1.5, rng.uniform(-math.pi, math.pi))
    return a, b


@pytest.mark.acceptance(2, "rotated IoU vs Monte-Carlo, 1000 pairs x 1e6 points (< 2e-3, < 60 s)")
def test_rotated_iou_oracle(record_property):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst, overlapping = 0.0, 0
    for _ in range(1000):
        a, b = _pair(rng)
        got = rotated_iou_bev(a, b)
        overlapping += got > 0
        worst = max(worst, abs(got - monte_carlo_bev_iou(a, b, 10 ** 6, rng)))
    elapsed = time.perf_counter() - t0
    record_property("measured", f"max |dev| {worst:.2e} over {overlapping} overlapping pairs, "
                                f"{elapsed:.1f} s")
    assert worst < 2e-3
    assert elapsed < 60.0


# 3 -------------------------------------------------------------------------------------------

@pytest.mark.acceptance(3, "AP|R40 vs exhaustive cutoff sweep, 50 instances (1e-12)")
def test_ap_oracle(record_property):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 21))
        scores = list(np.round(rng.random(n), 2))
        is_tp = list(rng.random(n) < 0.6)
        n_gt = max(1, sum(is_tp) + int(rng.integers(0, 5)))
        got = ap_r40(PrCurve.from_scores(scores, is_tp, n_gt))
        worst = max(worst, abs(got - sweep_ap(scores, is_tp, n_gt)))
    record_property("measured", f"max |dev| {worst:.1e}")
    assert worst <= 1e-12


# 4 -------------------------------------------------------------------------------------------

@pytest.mark.acceptance(4, "AOS closed form at 0, pi/4, pi/2, pi (exact)")
def test_aos_closed_form(record_property):
    got = [orientation_similarity(t) for t in (0.0, math.pi / 4, math.pi / 2, math.pi)]
    record_property("measured", str(got))
    assert got == [1.0, 0.5, 0.0, 1.0]


# 5 -------------------------------------------------------------------------------------------

@pytest.mark.acceptance(5, "ground depth closed form (1e-9), horizon INVALID, gridded bit-identical")
def test_ground_depth_closed_form(record_property):
    h = 6.5
    cam = CameraModel(2200.0, 2150.0, 961.5, 539.25, 1920, 1080)
    plane = GroundPlane.from_coefficients(0.0, 1.0, 0.0, -h)
    dm = ground_depth_map(cam, plane, 1e12)
    rng = np.random.default_rng(5)
    u = int(round(cam.cx))
    vs = rng.choice(np.arange(math.floor(cam.cy) + 1, cam.height), 100, replace=False)
    worst = max(abs(dm.values[v, u] - h * cam.fy / (v - cam.cy)) for v in vs)
    above = dm.values[: math.floor(cam.cy) + 1]
    cells = {(i, j): plane for i in range(-200, 200) for j in range(-1, 400)}
    gg = GriddedGround(5.0, (0.0, 0.0), cells, plane)
    same = gridded_depth_map(cam, gg, 1e12) == dm
    record_property("measured", f"max |dev| {worst:.1e}, gridded identical={same}")
    assert worst <= 1e-9
    assert np.all(above == INVALID)
    assert same


# 6 -------------------------------------------------------------------------------------------

def _on_plane(plane, n, rng):
    pts = np.column_stack([rng.uniform(-20, 20, n), rng.uniform(-3, 3, n), rng.uniform(5, 80, n)])
    return pts - np.outer(plane.signed_distance(pts), plane.normal)


@pytest.mark.acceptance(6, "plane fit: exact points 1e-9; sigma 0.01 m within 0.5 deg in >= 95/100")
def test_plane_fit_recovery(record_property):
    rng = np.random.default_rng(6)
    worst, good = 0.0, 0
    for _ in range(100):
        truth = GroundPlane.from_coefficients(rng.normal(0, 0.05), 1.0, rng.normal(0, 0.1),
                                              -rng.uniform(3, 9))
        exact = fit_plane(_on_plane(truth, 100, rng))
        worst = max(worst, max(abs(a - b) for a, b in zip(exact.coefficients, truth.coefficients)))
        noisy = fit_plane(_on_plane(truth, 100, rng) + rng.normal(0, 0.01, (100, 3)))
        cosang = min(1.0, abs(float(noisy.normal @ truth.normal)))
        good += math.degrees(math.acos(cosang)) <= 0.5
    record_property("measured", f"exact max |dev| {worst:.1e}, noisy within 0.5 deg: {good}/100")
    assert worst <= 1e-9
    assert good >= 95


# 7 -------------------------------------------------------------------------------------------

@pytest.mark.acceptance(7, "noise response: AOS vs integrated expectation (0.005); ACS strictly "
                           "decreasing in center sigma over 1k frames")
def test_noise_response(big_scene, record_property):
    scene = big_scene
    sigma = 0.1
    expected, _ = integrate.quad(
        lambda e: (1 + math.cos(2 * e)) / 2 * math.exp(-e * e / (2 * sigma ** 2))
        / (sigma * math.sqrt(2 * math.pi)), -12 * sigma, 12 * sigma)
    dets = perturb(scene.frames, NoiseModel(yaw_sigma=sigma), 71)
    cfg = EvalConfig(categories=("car",), iou_thresholds={"motor_vehicle": (0.5,)},
                     range_buckets=((0.0, math.inf),))
    cell = evaluate(scene.frames, dets, cfg, scene.planes).cell("car", 0.5)
    aos_err = abs(cell.aos - expected)

    means = []
    for s in (0.1, 0.5, 1.0, 2.0):
        dets = perturb(scene.frames, NoiseModel(center_sigma=s), 72)
        terms = []
        for fid, anns in scene.frames.items():
            pairs = list(zip(dets[fid], [a for a in anns if a.box3d is not None]))
            if pairs:
                terms.append((acs(MatchSet(tp=pairs), scene.planes[fid]), len(pairs)))
        means.append(math.fsum(v * n for v, n in terms) / sum(n for _, n in terms))
    record_property("measured", f"AOS {cell.aos:.5f} vs {expected:.5f} over {cell.op_tp} TPs; "
                                f"ACS {', '.join(f'{m:.4f}' for m in means)}")
    assert cell.op_tp >= 10_000
    assert aos_err <= 0.005
    assert all(x > y for x, y in zip(means, means[1:]))


# 8 ---------------------------------------------------------------------------------------------

@pytest.mark.acceptance(8, "car size prior: mean length 4.247 +- 0.01 m over 10k samples")
def test_car_size_statistics(big_scene, record_property):
    lengths = [a.box3d.length for fid in sorted(big_scene.frames) for a in big_scene.frames[fid]
               if a.category == "car" and a.box3d is not None]
    assert len(lengths) >= 10_000
    mean = float(np.mean(lengths[:10_000]))
    record_property("measured", f"mean length {mean:.4f} m over 10000 cars")
    assert abs(mean - 4.247) <= 0.01


# 9 ---------------------------------------------------------------------------------------------

PARSERS = [parse_labels, parse_calib, parse_gridded, parse_report, parse_eval_config,
           parse_depth_map]


@pytest.mark.acceptance(9, "fuzz 1e5 byte strings (ParseError only); 1e3 round trips per format")
def test_format_robustness(record_property):
    rng = np.random.default_rng(9)
    rejected = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LabelWarning)
        for k, data in enumerate(fuzz_inputs(rng, 100_000)):
            parse = PARSERS[k % len(PARSERS)]
            try:
                parse(data)
            except ParseError as e:
                assert isinstance(e.line, int) and isinstance(e.column, int)
                rejected += 1

    for _ in range(1000):
        anns = [random_annotation(rng) for _ in range(int(rng.integers(1, 4)))]
        for a, b in zip(anns, parse_labels(serialize_labels(anns), "f"), strict=True):
            same_item(a, b)
        dets = [random_detection(rng) for _ in range(int(rng.integers(1, 4)))]
        for a, b in zip(dets, parse_labels(serialize_labels(dets), "f"), strict=True):
            same_item(a, b)
        cam, plane, tr = random_calib(rng)
        cam2, plane2, tr2 = parse_calib(serialize_calib(cam, plane, tr))
        assert cam2 == cam and plane2 == plane
        assert (tr is None and tr2 is None) or np.array_equal(tr.matrix, tr2.matrix)
        rep = random_report(rng)
        assert parse_report(serialize_report(rep)) == rep
    record_property("measured", f"{rejected} of 100000 fuzz inputs rejected with ParseError, "
                                f"no other exceptions; 1000 round trips each")


# 10 --------------------------------------------------------------------------------------------

@pytest.mark.acceptance(10, "golden report reproduced byte-for-byte at 1, 2 and 8 threads")
def test_golden_run(tmp_path, record_property, capsys):
    golden = (FIXTURES / "golden_report.json").read_bytes()
    tree = FIXTURES / "synth200"
    same = []
    for threads in (1, 2, 8):
        out = tmp_path / f"report{threads}.json"
        rc = main(["evaluate", "--gt", str(tree / "label_2"), "--pred", str(tree / "pred"),
                   "--calib", str(tree / "calib"), "--out", str(out), "--threads", str(threads)])
        assert rc == 0
        same.append(out.read_bytes() == golden)
    record_property("measured", f"identical at threads 1/2/8: {same}")
    assert all(same)
