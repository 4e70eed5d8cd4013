"""Detection matching, AP|R40, ground-aware similarity metrics and Rope_score."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import EmptyTruePositives, FrameMismatch, MissingPlane
from .geometry import Box2D, Box3D, bev_corners, ground_center, ground_corners

CATEGORIES = (
    "car", "van", "bus", "truck",
    "cyclist", "motorcyclist", "tricyclist", "barrow",
    "pedestrian",
    "traffic_cone", "triangle_plate", "unknown_movable", "unknown_unmovable",
)

CATEGORY_GROUPS = {
    "motor_vehicle": ("car", "van", "bus", "truck"),
    "cyclist": ("cyclist", "motorcyclist", "tricyclist", "barrow"),
    "pedestrian": ("pedestrian",),
    "static": ("traffic_cone", "triangle_plate", "unknown_movable", "unknown_unmovable"),
}
GROUP_OF = {c: g for g, cats in CATEGORY_GROUPS.items() for c in cats}

DEFAULT_IOU_THRESHOLDS = {
    "motor_vehicle": (0.5, 0.7),
    "cyclist": (0.25, 0.5),
    "pedestrian": (0.25, 0.5),
    "static": (0.25, 0.5),
}
DEFAULT_EVAL_CATEGORIES = CATEGORY_GROUPS["motor_vehicle"] + CATEGORY_GROUPS["cyclist"] + ("pedestrian",)
DEFAULT_RANGE_BUCKETS = ((0.0, math.inf), (0.0, 30.0), (30.0, 60.0), (60.0, 90.0), (90.0, 120.0))

IGNORE_IOU_2D = 0.5
N_RECALL = 40


@dataclass(frozen=True)
class Annotation:
    frame_id: str
    category: str
    occlusion: int
    truncation: int
    box2d: Box2D
    box3d: Box3D | None = None
    alpha: float = 0.0

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.occlusion not in (0, 1, 2) or self.truncation not in (0, 1, 2):
            raise ValueError("occlusion/truncation must be 0, 1 or 2")


@dataclass(frozen=True)
class Detection:
    frame_id: str
    category: str
    box3d: Box3D
    score: float
    box2d: Box2D | None = None
    alpha: float = 0.0

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


def bucket_label(zmin, zmax):
    if zmin <= 0 and math.isinf(zmax):
        return "all"
    return f"{zmin:g}-{zmax:g}"


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: dict = field(default_factory=lambda: dict(DEFAULT_IOU_THRESHOLDS))
    range_buckets: tuple = DEFAULT_RANGE_BUCKETS
    categories: tuple = DEFAULT_EVAL_CATEGORIES
    omega1: float = 8.0
    omega2: float = 2.0
    recall_positions: int = N_RECALL
    matching: str = "greedy-by-score"
    ags_normalizer: str = "pred"

    def __post_init__(self):
        for group, ths in self.iou_thresholds.items():
            if not all(0 < t <= 1 for t in ths):
                raise ValueError(f"IoU thresholds for {group} must lie in (0, 1]")
        if not (self.omega1 > 0 and self.omega2 > 0):
            raise ValueError("omega1 and omega2 must be positive")
        if self.recall_positions != N_RECALL:
            raise ValueError("only 40 recall positions are supported")
        if self.matching != "greedy-by-score":
            raise ValueError(f"unsupported matching rule {self.matching!r}")
        if self.ags_normalizer not in ("pred", "gt"):
            raise ValueError("ags_normalizer must be 'pred' or 'gt'")
        for c in self.categories:
            if c not in CATEGORIES:
                raise ValueError(f"unknown category {c!r}")
        for zmin, zmax in self.range_buckets:
            if not zmin < zmax:
                raise ValueError(f"empty range bucket [{zmin}, {zmax})")

    def thresholds_for(self, category):
        return tuple(self.iou_thresholds[GROUP_OF[category]])

    def as_dict(self):
        return {
            "categories": list(self.categories),
            "iou_thresholds": {g: list(t) for g, t in sorted(self.iou_thresholds.items())},
            "range_buckets": [bucket_label(a, b) for a, b in self.range_buckets],
            "omega1": self.omega1,
            "omega2": self.omega2,
            "recall_positions": self.recall_positions,
            "matching": self.matching,
            "ags_normalizer": self.ags_normalizer,
        }


@dataclass
class MatchSet:
    tp: list = field(default_factory=list)        # (Detection, Annotation)
    fp: list = field(default_factory=list)
    fn: list = field(default_factory=list)
    ignored: list = field(default_factory=list)


@dataclass(eq=False)
class PrCurve:
    """Cumulative TP/FP counts at each distinct score cutoff (descending)."""

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    n_gt: int

    @classmethod
    def from_scores(cls, scores, is_tp, n_gt):
        scores = np.asarray(scores, dtype=float)
        is_tp = np.asarray(is_tp, dtype=bool)
        if scores.size == 0:
            empty = np.zeros(0)
            return cls(empty, empty.astype(np.int64), empty.astype(np.int64), int(n_gt))
        order = np.argsort(-scores, kind="stable")
        s = scores[order]
        t = np.cumsum(is_tp[order]).astype(np.int64)
        f = np.cumsum(~is_tp[order]).astype(np.int64)
        # last index of each run of equal scores
        last = np.flatnonzero(np.append(s[1:] != s[:-1], True))
        return cls(s[last], t[last], f[last], int(n_gt))

    @property
    def precision(self):
        return self.tp / np.maximum(self.tp + self.fp, 1)

    @property
    def recall(self):
        return self.tp / self.n_gt if self.n_gt else np.zeros(len(self.tp))

    def f1_operating_index(self):
        """Cutoff index with maximal F1 (highest cutoff on ties); None without TPs."""
        if self.n_gt == 0 or len(self.tp) == 0 or self.tp[-1] == 0:
            return None
        f1 = 2.0 * self.tp / (self.tp + self.fp + self.n_gt)
        return int(np.argmax(f1))


def ap_r40(curve):
    """AP over 40 recall positions with running-max precision, in percent."""
    if curve.n_gt == 0 or len(curve.tp) == 0:
        return 0.0
    prec = curve.precision
    # max precision over cutoffs with recall >= r, scanning from the far end
    envelope = np.maximum.accumulate(prec[::-1])[::-1]
    total = 0.0
    for k in range(1, N_RECALL + 1):
        # recall >= k/40, compared in integers
        idx = np.flatnonzero(curve.tp * N_RECALL >= k * curve.n_gt)
        if idx.size:
            total += envelope[idx[0]]
    return 100.0 * total / N_RECALL


def _polygon_area(poly):
    a = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        a += x1 * y2 - x2 * y1
    return 0.5 * a


def _clip_convex(subject, clip):
    """Sutherland-Hodgman: intersection of two counterclockwise convex polygons."""
    out = subject
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp = out
        out = []
        m = len(inp)
        for j in range(m):
            px, py = inp[j - 1]
            qx, qy = inp[j]
            sp = ex * (py - ay) - ey * (px - ax)
            sq = ex * (qy - ay) - ey * (qx - ax)
            if sq >= 0:
                if sp < 0:
                    t = sp / (sp - sq)
                    out.append((px + t * (qx - px), py + t * (qy - py)))
                out.append((qx, qy))
            elif sp >= 0:
                t = sp / (sp - sq)
                out.append((px + t * (qx - px), py + t * (qy - py)))
    return out


def _bev_intersection(a, b):
    ra = 0.5 * math.hypot(a.length, a.width)
    rb = 0.5 * math.hypot(b.length, b.width)
    dx = a.center[0] - b.center[0]
    dz = a.center[2] - b.center[2]
    if dx * dx + dz * dz >= (ra + rb) ** 2:
        return 0.0
    pa = [tuple(p) for p in bev_corners(a).tolist()]
    pb = [tuple(p) for p in bev_corners(b).tolist()]
    poly = _clip_convex(pa, pb)
    if len(poly) < 3:
        return 0.0
    return max(0.0, _polygon_area(poly))


def rotated_iou_bev(a, b):
    """IoU of the two boxes' footprints on the (x, z) plane."""
    if a == b:
        return 1.0
    inter = _bev_intersection(a, b)
    if inter == 0.0:
        return 0.0
    union = a.footprint_area + b.footprint_area - inter
    return min(1.0, max(0.0, inter / union))


def iou_3d(a, b):
    if a == b:
        return 1.0
    top = max(a.center[1] - a.height / 2, b.center[1] - b.height / 2)
    bottom = min(a.center[1] + a.height / 2, b.center[1] + b.height / 2)
    overlap_y = bottom - top
    if overlap_y <= 0:
        return 0.0
    inter = _bev_intersection(a, b) * overlap_y
    if inter == 0.0:
        return 0.0
    union = a.volume + b.volume - inter
    return min(1.0, max(0.0, inter / union))


def _check_frame(dets, gts):
    ids = {d.frame_id for d in dets} | {g.frame_id for g in gts}
    if len(ids) > 1:
        raise FrameMismatch(f"items from several frames: {sorted(ids)}")


def _greedy(dets, gts3d, ious, iou_threshold, ignore_regions):
    """Greedy assignment given a det x gt IoU matrix (rows in det input order)."""
    out = MatchSet()
    taken = [False] * len(gts3d)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    for i in order:
        best, best_iou = -1, -1.0
        row = ious[i]
        for j in range(len(gts3d)):
            if not taken[j] and row[j] >= iou_threshold and row[j] > best_iou:
                best, best_iou = j, row[j]
        if best >= 0:
            taken[best] = True
            out.tp.append((dets[i], gts3d[best]))
            continue
        box = dets[i].box2d
        if box is not None and any(box.iou(g.box2d) >= IGNORE_IOU_2D for g in ignore_regions):
            out.ignored.append(dets[i])
        else:
            out.fp.append(dets[i])
    out.fn = [g for g, t in zip(gts3d, taken) if not t]
    return out


def _split_frame(dets, gts, category):
    dets = [d for d in dets if d.category == category]
    gts3d = [g for g in gts if g.category == category and g.box3d is not None]
    regions = [g for g in gts if g.category == category and g.box3d is None]
    return dets, gts3d, regions


def _iou_matrix(dets, gts3d):
    return [[iou_3d(d.box3d, g.box3d) for g in gts3d] for d in dets]


def match_frame(dets, gts, category, iou_threshold):
    """Greedy-by-score matching of one frame's detections to annotations.

    Detections are visited by descending score (input order on ties) and
    claim the still-unmatched 3D annotation with the highest 3D IoU at or
    above ``iou_threshold`` (earliest annotation on ties). An unmatched
    detection whose 2D box overlaps a 2D-only annotation of the same
    category with IoU >= 0.5 is ignored instead of counted as a false
    positive.
    """
    _check_frame(dets, gts)
    dets, gts3d, regions = _split_frame(dets, gts, category)
    return _greedy(dets, gts3d, _iou_matrix(dets, gts3d), iou_threshold, regions)


# -- per-sample similarity terms ------------------------------------------------

def center_similarity(det_box, gt_box, plane):
    gc_gt = ground_center(gt_box, plane)
    gc_pred = ground_center(det_box, plane)
    dist = float(np.linalg.norm(gc_pred - gc_gt))
    norm = float(np.linalg.norm(gc_gt))
    if norm == 0.0:
        return 1.0 if dist == 0.0 else 0.0
    return 1.0 - min(1.0, dist / norm)


def orientation_similarity(delta_theta):
    # fold into [0, pi/2] first so the term is exactly even in delta_theta
    t = abs(math.remainder(delta_theta, math.pi))
    return (1.0 + math.cos(2.0 * t)) / 2.0


def area_similarity(det_box, gt_box):
    a_gt = gt_box.footprint_area
    diff = abs(det_box.footprint_area - a_gt)
    return 1.0 - min(1.0, diff / a_gt)


def ground_vertex_distance(det_box, gt_box):
    """Mean distance of the 4 bottom corners, minimized over cyclic re-indexing
    of the predicted corners (so a pi yaw flip costs nothing)."""
    s = ground_corners(gt_box)
    s_hat = ground_corners(det_box)
    best = math.inf
    for k in range(4):
        d = float(np.mean(np.linalg.norm(s - np.roll(s_hat, k, axis=0), axis=1)))
        best = min(best, d)
    return best


def ground_vertex_similarity(det_box, gt_box, plane, normalizer="pred"):
    dist = ground_vertex_distance(det_box, gt_box)
    ref = det_box if normalizer == "pred" else gt_box
    norm = float(np.linalg.norm(ground_center(ref, plane)))
    if norm == 0.0:
        return 1.0 if dist == 0.0 else 0.0
    return 1.0 - min(1.0, dist / norm)


def _require(matches):
    if not matches.tp:
        raise EmptyTruePositives("no true positives")


def _mean(values):
    values = list(values)
    return math.fsum(values) / len(values)


def acs(matches, plane):
    _require(matches)
    return _mean(center_similarity(d.box3d, g.box3d, plane) for d, g in matches.tp)


def aos(matches):
    _require(matches)
    return _mean(orientation_similarity(d.box3d.yaw - g.box3d.yaw) for d, g in matches.tp)


def aas(matches):
    _require(matches)
    return _mean(area_similarity(d.box3d, g.box3d) for d, g in matches.tp)


def agd_ags(matches, plane, normalizer="pred"):
    _require(matches)
    agd = _mean(ground_vertex_distance(d.box3d, g.box3d) for d, g in matches.tp)
    ags = _mean(ground_vertex_similarity(d.box3d, g.box3d, plane, normalizer)
                for d, g in matches.tp)
    return agd, ags


def rope_score(ap, acs, aos, aas, ags, omega1=8.0, omega2=2.0):
    """(omega1*AP + omega2*S) / (omega1 + omega2) with S the mean similarity in percent."""
    s = 100.0 * (acs + aos + aas + ags) / 4.0
    return (omega1 * ap + omega2 * s) / (omega1 + omega2)


# -- full evaluation ----------------------------------------------------------------

@dataclass
class CellResult:
    ap: float = 0.0
    acs: float = 0.0
    aos: float = 0.0
    aas: float = 0.0
    agd: float = 0.0
    ags: float = 0.0
    rope_score: float = 0.0
    tp: int = 0
    fp: int = 0
    fn: int = 0
    undefined: bool = True
    op_score: float | None = None
    op_tp: int = 0


@dataclass
class MetricReport:
    cells: dict = field(default_factory=dict)     # (category, iou, bucket) -> CellResult
    meta: dict = field(default_factory=dict)

    def cell(self, category, iou_threshold, bucket="all"):
        return self.cells[(category, iou_threshold, bucket)]


def _sample_terms(det, gt, plane, normalizer):
    return (center_similarity(det.box3d, gt.box3d, plane),
            orientation_similarity(det.box3d.yaw - gt.box3d.yaw),
            area_similarity(det.box3d, gt.box3d),
            ground_vertex_distance(det.box3d, gt.box3d),
            ground_vertex_similarity(det.box3d, gt.box3d, plane, normalizer))


def _frame_records(frame_id, frame_gts, frame_dets, plane, cfg):
    """Match one frame for every (category, threshold).

    Returns {(category, thr): (tp_records, fp_records, fn_depths)} where a TP
    record is (score, gt_depth, terms) and an FP record is (score, det_depth).
    """
    out = {}
    for category in cfg.categories:
        dets, gts3d, regions = _split_frame(frame_dets, frame_gts, category)
        if not dets and not gts3d:
            continue
        ious = _iou_matrix(dets, gts3d)
        for thr in cfg.thresholds_for(category):
            m = _greedy(dets, gts3d, ious, thr, regions)
            tps = [(d.score, g.box3d.center[2],
                    _sample_terms(d, g, plane, cfg.ags_normalizer)) for d, g in m.tp]
            fps = [(d.score, d.box3d.center[2]) for d in m.fp]
            fns = [g.box3d.center[2] for g in m.fn]
            out[(category, thr)] = (tps, fps, fns)
    return out


def _cell(tps, fps, fns, cfg):
    """Aggregate one (category, threshold, bucket) cell."""
    n_gt = len(tps) + len(fns)
    scores = [s for s, _ in tps] + [s for s, _ in fps]
    is_tp = [True] * len(tps) + [False] * len(fps)
    curve = PrCurve.from_scores(scores, is_tp, n_gt)
    res = CellResult(tp=len(tps), fp=len(fps), fn=len(fns))
    res.ap = ap_r40(curve)
    k = curve.f1_operating_index()
    if k is not None:
        cutoff = float(curve.thresholds[k])
        terms = [t for s, t in tps if s >= cutoff]
        res.op_score = cutoff
        res.op_tp = len(terms)
        res.acs, res.aos, res.aas, res.agd, res.ags = (
            _mean(t[i] for t in terms) for i in range(5))
        res.undefined = False
    res.rope_score = rope_score(res.ap, res.acs, res.aos, res.aas, res.ags,
                                cfg.omega1, cfg.omega2)
    return res


def evaluate(gts, dets, cfg=None, planes=None, threads=None):
    """Evaluate detections against annotations.

    ``gts`` and ``dets`` map frame id -> list of Annotation / Detection;
    ``planes`` maps frame id -> GroundPlane. Frames are matched
    independently (optionally on ``threads`` workers) and aggregated in
    sorted frame order, so the result does not depend on scheduling.
    """
    cfg = cfg or EvalConfig()
    planes = planes or {}
    extra = sorted(set(dets) - set(gts))
    if extra:
        raise FrameMismatch(f"detections for unknown frames: {extra[:5]}")
    frames = sorted(gts)
    for f in frames:
        if f not in planes:
            raise MissingPlane(f"no ground plane for frame {f!r}")
        for item in list(gts[f]) + list(dets.get(f, ())):
            if item.frame_id != f:
                raise FrameMismatch(f"item with frame_id {item.frame_id!r} filed under {f!r}")

    def work(f):
        return _frame_records(f, gts[f], dets.get(f, []), planes[f], cfg)

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_frame = list(pool.map(work, frames))
    else:
        per_frame = [work(f) for f in frames]

    report = MetricReport(meta={
        "format": "v1",
        "devkit_version": __version__,
        "operating_point": "max_f1",
        "config": cfg.as_dict(),
    })
    for category in cfg.categories:
        for thr in cfg.thresholds_for(category):
            recs = [r[(category, thr)] for r in per_frame if (category, thr) in r]
            for zmin, zmax in cfg.range_buckets:
                def inside(z):
                    return zmin <= z < zmax
                tps = [(s, t) for fr in recs for s, z, t in fr[0] if inside(z)]
                fps = [(s, z) for fr in recs for s, z in fr[1] if inside(z)]
                fns = [z for fr in recs for z in fr[2] if inside(z)]
                if not (tps or fps or fns):
                    continue
                report.cells[(category, thr, bucket_label(zmin, zmax))] = _cell(tps, fps, fns, cfg)
    return report
