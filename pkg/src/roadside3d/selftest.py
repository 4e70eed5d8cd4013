"""Embedded oracle checks behind ``roadside3d self-test``.

Each check compares a library routine against an independent computation
(Monte-Carlo area, exhaustive sweep, closed form) on small seeded inputs.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .geometry import (Box3D, CameraModel, GriddedGround, GroundPlane,
                       fit_plane, ground_depth_map, gridded_depth_map)
from .io import parse_report, serialize_report
from .metrics import PrCurve, ap_r40, evaluate, orientation_similarity, rotated_iou_bev


def monte_carlo_bev_iou(a, b, n, rng):
    """IoU from the fraction of jittered-grid samples of footprint ``a`` inside ``b``."""
    k = max(1, int(math.sqrt(n)))
    g = (np.arange(k)[:, None] + rng.random((k, k))) / k - 0.5
    h = (np.arange(k)[None, :] + rng.random((k, k))) / k - 0.5
    dl, dw = (g * a.length).ravel(), (h * a.width).ravel()
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    x = a.center[0] + c * dl + s * dw
    z = a.center[2] - s * dl + c * dw
    # same points in b's local frame
    cb, sb = math.cos(b.yaw), math.sin(b.yaw)
    rx, rz = x - b.center[0], z - b.center[2]
    lb = cb * rx - sb * rz
    wb = sb * rx + cb * rz
    frac = np.count_nonzero((np.abs(lb) <= b.length / 2) & (np.abs(wb) <= b.width / 2)) / dl.size
    inter = frac * a.length * a.width
    union = a.length * a.width + b.length * b.width - inter
    return inter / union


def exhaustive_ap(scores, is_tp, n_gt):
    """AP|R40 by re-counting TP/FP at every distinct score cutoff."""
    if n_gt == 0:
        return 0.0
    points = []
    for c in sorted(set(scores), reverse=True):
        tp = sum(1 for s, t in zip(scores, is_tp) if s >= c and t)
        fp = sum(1 for s, t in zip(scores, is_tp) if s >= c and not t)
        points.append((Fraction(tp, n_gt), tp / (tp + fp)))
    total = 0.0
    for k in range(1, 41):
        cands = [p for r, p in points if r >= Fraction(k, 40)]
        total += max(cands) if cands else 0.0
    return 100.0 * total / 40


def random_box(rng, spread=3.0):
    return Box3D((rng.uniform(-spread, spread), rng.uniform(-1, 1), rng.uniform(10, 10 + spread)),
                 rng.uniform(0.5, 5.0), rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0),
                 rng.uniform(-math.pi, math.pi))


def check_iou(rng):
    worst = 0.0
    for _ in range(50):
        a = random_box(rng, 2.0)
        b = Box3D((a.center[0] + rng.uniform(-2, 2), a.center[1], a.center[2] + rng.uniform(-2, 2)),
                  rng.uniform(0.5, 5.0), rng.uniform(0.5, 3.0), 1.0, rng.uniform(-math.pi, math.pi))
        worst = max(worst, abs(rotated_iou_bev(a, b) - monte_carlo_bev_iou(a, b, 250_000, rng)))
    return worst < 2e-3, f"max |IoU - MC| = {worst:.2e}"


def check_ap(rng):
    worst = 0.0
    for _ in range(30):
        n = int(rng.integers(1, 16))
        scores = list(np.round(rng.random(n), 2))
        is_tp = list(rng.random(n) < 0.6)
        n_gt = sum(is_tp) + int(rng.integers(0, 4))
        got = ap_r40(PrCurve.from_scores(scores, is_tp, n_gt))
        worst = max(worst, abs(got - exhaustive_ap(scores, is_tp, n_gt)))
    return worst <= 1e-12, f"max |AP - sweep| = {worst:.1e}"


def check_aos(rng):
    got = [orientation_similarity(t) for t in (0.0, math.pi / 4, math.pi / 2, math.pi)]
    return got == [1.0, 0.5, 0.0, 1.0], f"{got}"


def check_depth(rng):
    h = 6.0
    cam = CameraModel(2000.0, 2000.0, 80.0, 60.0, 160, 120)
    plane = GroundPlane.from_coefficients(0.0, 1.0, 0.0, -h)
    dm = ground_depth_map(cam, plane, 1e6)
    v = np.arange(61, 120)
    err = np.max(np.abs(dm.values[61:, 80] - h * cam.fy / (v - cam.cy)))
    horizon_ok = not dm.valid[:61].any()
    gg = GriddedGround(5.0, (0.0, 0.0), {(i, j): plane for i in range(-20, 20) for j in range(0, 60)},
                       plane)
    same = gridded_depth_map(cam, gg, 1e6) == dm
    return err < 1e-9 and horizon_ok and same, f"closed-form err {err:.1e}, gridded identical={same}"


def check_plane_fit(rng):
    truth = GroundPlane.from_coefficients(0.1, 1.0, 0.2, -5.0)
    n = truth.normal
    pts = rng.uniform(-20, 20, (200, 3))
    pts -= np.outer(pts @ n + truth.d, n)
    fit = fit_plane(pts)
    err = max(abs(a - b) for a, b in zip(fit.coefficients, truth.coefficients))
    return err < 1e-9, f"max coefficient error {err:.1e}"


def check_identity(rng):
    from .synth import SceneConfig, generate_scene, gts_as_detections
    scene = generate_scene(SceneConfig(seed=int(rng.integers(2 ** 32)), n_frames=10))
    rep = evaluate(scene.frames, gts_as_detections(scene.frames), planes=scene.planes)
    ok = bool(rep.cells) and all(
        c.ap == 100.0 and c.rope_score == 100.0 and c.agd == 0.0
        and c.acs == c.aos == c.aas == c.ags == 1.0 for c in rep.cells.values())
    round_trip = parse_report(serialize_report(rep)) == rep
    return ok and round_trip, f"{len(rep.cells)} cells, report round trip={round_trip}"


CHECKS = [
    ("rotated IoU vs Monte-Carlo", check_iou),
    ("AP|R40 vs exhaustive sweep", check_ap),
    ("AOS closed form", check_aos),
    ("ground depth closed form", check_depth),
    ("plane fit exact recovery", check_plane_fit),
    ("metric identity on synthetic scene", check_identity),
]


def run_all(out, seed=0):
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn(rng)
        except Exception as e:  # a crash is a failed check, not a crashed run
            ok, detail = False, f"{type(e).__name__}: {e}"
        all_ok &= ok
        out.write(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}\n")
    return all_ok
