"""Deterministic synthetic roadside scenes and detector-noise models.

Randomness comes from numpy's PCG64 generator seeded through SeedSequence
with fixed per-stream keys:

* ``[seed, frame_index, 0]``: camera of a frame and its object counts
* ``[seed, frame_index, 1, k]``: k-th 3D object of a frame
* ``[seed, frame_index, 2, k]``: k-th 2D-only object of a frame
* ``[seed, crc32(frame_id), 3, k]``: noise on the k-th annotation (perturb)
* ``[seed, crc32(frame_id), 4]``: clutter of a frame (perturb)

so a draw never depends on how many numbers another stream consumed.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import BoxBehindCamera, ConfigError, ParseError
from .geometry import (Box3D, CameraModel, GroundPlane, normalize_angle,
                       project_box_to_2d)
from .io import parse_key_values, serialize_calib, serialize_labels
from .metrics import CATEGORIES, Annotation, Detection, rotated_iou_bev

MIN_SIZE = 0.1

# (length, height, width) mean and std in meters. Motor vehicles, pedestrians
# and cyclist-like classes follow published roadside statistics; the static
# and unknown classes are placeholders.
SIZE_MEAN = {
    "car": (4.247, 1.325, 1.706),
    "truck": (7.122, 2.623, 1.706),
    "van": (4.651, 1.750, 1.757),
    "bus": (10.575, 3.009, 2.533),
    "pedestrian": (0.478, 1.610, 0.501),
    "cyclist": (1.525, 1.382, 0.505),
    "tricyclist": (2.631, 1.539, 1.077),
    "motorcyclist": (1.692, 1.418, 0.613),
    "barrow": (1.200, 1.000, 0.600),
    "traffic_cone": (0.400, 0.700, 0.400),
    "triangle_plate": (0.500, 0.450, 0.150),
    "unknown_movable": (1.000, 1.000, 1.000),
    "unknown_unmovable": (1.000, 1.000, 1.000),
}
SIZE_STD = {
    "car": (0.315, 0.258, 0.234),
    "truck": (2.067, 0.628, 0.492),
    "van": (0.429, 0.311, 0.268),
    "bus": (1.806, 0.404, 0.426),
    "pedestrian": (0.178, 0.160, 0.143),
    "cyclist": (0.264, 0.280, 0.217),
    "tricyclist": (0.497, 0.196, 0.292),
    "motorcyclist": (0.276, 0.175, 0.211),
    "barrow": (0.200, 0.150, 0.100),
    "traffic_cone": (0.050, 0.050, 0.050),
    "triangle_plate": (0.050, 0.050, 0.030),
    "unknown_movable": (0.300, 0.300, 0.300),
    "unknown_unmovable": (0.300, 0.300, 0.300),
}
CATEGORY_WEIGHTS = {
    "car": 0.55, "van": 0.06, "bus": 0.03, "truck": 0.06,
    "cyclist": 0.05, "motorcyclist": 0.06, "tricyclist": 0.03, "barrow": 0.01,
    "pedestrian": 0.09,
    "traffic_cone": 0.04, "triangle_plate": 0.01,
    "unknown_movable": 0.005, "unknown_unmovable": 0.005,
}


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    n_frames: int = 100
    image_size: tuple = (1920, 1080)
    # Camera ranges are placeholders; only their shape is published.
    camera_height_range: tuple = (4.0, 8.0)
    pitch_range: tuple = (math.radians(5.0), math.radians(15.0))
    focal_range: tuple = (2100.0, 2800.0)
    objects_per_frame: float = 24.0
    extra_2d_per_frame: float = 10.0
    category_weights: dict = field(default_factory=lambda: dict(CATEGORY_WEIGHTS))
    size_mean: dict = field(default_factory=lambda: dict(SIZE_MEAN))
    size_std: dict = field(default_factory=lambda: dict(SIZE_STD))
    depth_range: tuple = (5.0, 150.0)
    depth_mode: float = 70.0
    depth_spread: float = 20.0
    max_attempts: int = 50

    def __post_init__(self):
        def rng_ok(r):
            return len(r) == 2 and r[0] <= r[1]
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.n_frames < 0:
            raise ConfigError("n_frames must be >= 0")
        for name in ("camera_height_range", "pitch_range", "focal_range", "depth_range"):
            if not rng_ok(getattr(self, name)):
                raise ConfigError(f"{name} must be a nonempty (low, high) range")
        if self.camera_height_range[0] <= 0 or self.focal_range[0] <= 0:
            raise ConfigError("camera height and focal length must be positive")
        if not (-math.pi / 2 < self.pitch_range[0] and self.pitch_range[1] < math.pi / 2):
            raise ConfigError("pitch must lie in (-pi/2, pi/2)")
        if self.depth_range[0] <= 0:
            raise ConfigError("depth range must be positive")
        if self.objects_per_frame < 0 or self.extra_2d_per_frame < 0:
            raise ConfigError("object rates must be >= 0")
        if self.depth_spread <= 0:
            raise ConfigError("depth_spread must be positive")
        w = self.category_weights
        if any(c not in CATEGORIES for c in w) or any(v < 0 for v in w.values()):
            raise ConfigError("category weights must be >= 0 over known categories")
        if abs(sum(w.values()) - 1.0) > 1e-9:
            raise ConfigError("category weights must sum to 1")
        for c, v in w.items():
            if v > 0 and (c not in self.size_mean or c not in self.size_std):
                raise ConfigError(f"no size prior for category {c!r}")
        for c, s in self.size_std.items():
            if any(x < 0 for x in s):
                raise ConfigError(f"negative size std for {c!r}")


@dataclass
class Scene:
    frames: dict        # frame id -> list of Annotation
    cameras: dict       # frame id -> CameraModel
    planes: dict        # frame id -> GroundPlane

    def calib_text(self, frame_id):
        return serialize_calib(self.cameras[frame_id], self.planes[frame_id])

    def label_text(self, frame_id):
        return serialize_labels(self.frames[frame_id])


def frame_id(index):
    return f"{index:06d}"


def _stream(*key):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def camera_plane(height, pitch):
    """Ground plane seen by a camera at ``height`` pitched down by ``pitch``."""
    return GroundPlane.from_coefficients(0.0, math.cos(pitch), math.sin(pitch), -height)


def _visible_depths(cam, plane, cfg):
    """Camera-depth interval of ground points imaged between the top and bottom
    rows, clipped to the configured depth range."""
    # ground point at pixel row v:  Z = -d / (beta*(v-cy)/fy + gamma)
    def depth_at(v):
        den = plane.beta * (v - cam.cy) / cam.fy + plane.gamma
        return -plane.d / den if den > 0 else math.inf
    near = depth_at(cam.height)
    far = depth_at(0.0)
    lo = max(near, cfg.depth_range[0])
    hi = min(far, cfg.depth_range[1])
    return lo, hi


def _sample_depth(rng, lo, hi, cfg):
    for _ in range(64):
        z = rng.normal(cfg.depth_mode, cfg.depth_spread)
        if lo <= z <= hi:
            return float(z)
    return float(rng.uniform(lo, hi))


def _sample_size(rng, category, cfg):
    mean, std = cfg.size_mean[category], cfg.size_std[category]
    out = []
    for m, s in zip(mean, std):
        v = m
        for _ in range(64):
            v = rng.normal(m, s)
            if v >= MIN_SIZE:
                break
        out.append(max(float(v), MIN_SIZE))
    return out  # length, height, width


def _sample_box(rng, cam, plane, dims, cfg):
    """Random pose for a box of fixed (length, height, width) resting on ``plane``."""
    lo, hi = _visible_depths(cam, plane, cfg)
    if not lo < hi:
        return None
    z = _sample_depth(rng, lo, hi, cfg)
    # lateral band 10% wider than the image on each side: truncated objects
    margin = 0.1 * cam.width
    x = float(rng.uniform((-cam.cx - margin) * z / cam.fx,
                          (cam.width - cam.cx + margin) * z / cam.fx))
    # bottom-face center on the plane: beta*y + gamma*z + alpha*x + d = 0
    y = -(plane.d + plane.alpha * x + plane.gamma * z) / plane.beta
    length, height, width = dims
    yaw = float(rng.uniform(-math.pi, math.pi))
    return Box3D.from_bottom_center((x, y, z), length, width, height, yaw)


def _fits(box, cam, placed):
    try:
        b2 = project_box_to_2d(cam, box)
    except BoxBehindCamera:
        return None
    if b2.xmax <= 0 or b2.ymax <= 0 or b2.xmin >= cam.width or b2.ymin >= cam.height:
        return None
    for other in placed:
        if rotated_iou_bev(box, other) > 0.0:
            return None
    return b2


def _categories(cfg):
    cats = [c for c in CATEGORIES if cfg.category_weights.get(c, 0) > 0]
    p = np.array([cfg.category_weights[c] for c in cats])
    return cats, p / p.sum()


def _union_area(rects):
    """Area of a union of axis-aligned rectangles (x1, y1, x2, y2)."""
    rects = [r for r in rects if r[2] > r[0] and r[3] > r[1]]
    if not rects:
        return 0.0
    xs = sorted({r[0] for r in rects} | {r[2] for r in rects})
    area = 0.0
    for xa, xb in zip(xs[:-1], xs[1:]):
        spans = sorted((r[1], r[3]) for r in rects if r[0] <= xa and r[2] >= xb)
        covered, cur_a, cur_b = 0.0, None, None
        for a, b in spans:
            if cur_b is None or a > cur_b:
                if cur_b is not None:
                    covered += cur_b - cur_a
                cur_a, cur_b = a, b
            else:
                cur_b = max(cur_b, b)
        if cur_b is not None:
            covered += cur_b - cur_a
        area += covered * (xb - xa)
    return area


def _level(fraction):
    if fraction <= 1e-12:
        return 0
    return 1 if fraction <= 0.5 else 2


def _label_visibility(objs, cam):
    """Occlusion from closer objects' 2D boxes, truncation from the image border."""
    W, H = cam.width, cam.height
    out = []
    for k, (box, b2, depth) in enumerate(objs):
        full = (b2.xmax - b2.xmin) * (b2.ymax - b2.ymin)
        vis = (max(b2.xmin, 0.0), max(b2.ymin, 0.0), min(b2.xmax, W), min(b2.ymax, H))
        vis_area = max(0.0, vis[2] - vis[0]) * max(0.0, vis[3] - vis[1])
        trunc = _level(1.0 - vis_area / full) if full > 0 else 0
        clips = []
        for j, (_, o2, odepth) in enumerate(objs):
            if j == k or odepth >= depth:
                continue
            clips.append((max(vis[0], o2.xmin), max(vis[1], o2.ymin),
                          min(vis[2], o2.xmax), min(vis[3], o2.ymax)))
        occ = _level(_union_area(clips) / vis_area) if vis_area > 0 else 2
        out.append((occ, trunc))
    return out


def _observation_angle(box):
    return normalize_angle(box.yaw - math.atan2(box.center[0], box.center[2]))


def _generate_frame(cfg, index):
    fid = frame_id(index)
    rng = _stream(cfg.seed, index, 0)
    h = float(rng.uniform(*cfg.camera_height_range))
    pitch = float(rng.uniform(*cfg.pitch_range))
    f = float(rng.uniform(*cfg.focal_range))
    w, hh = cfg.image_size
    cam = CameraModel(f, f, w / 2.0, hh / 2.0, int(w), int(hh))
    plane = camera_plane(h, pitch)
    n3d = int(rng.poisson(cfg.objects_per_frame))
    n2d = int(rng.poisson(cfg.extra_2d_per_frame))
    cats, p = _categories(cfg)

    placed, objs = [], []
    for kind, count in ((1, n3d), (2, n2d)):
        for k in range(count):
            orng = _stream(cfg.seed, index, kind, k)
            category = cats[int(orng.choice(len(cats), p=p))]
            dims = _sample_size(orng, category, cfg)
            for _ in range(cfg.max_attempts):
                box = _sample_box(orng, cam, plane, dims, cfg)
                if box is None:
                    break
                b2 = _fits(box, cam, placed)
                if b2 is not None:
                    placed.append(box)
                    objs.append((category, box, b2, kind == 1))
                    break
    vis = _label_visibility([(b, b2, b.center[2]) for _, b, b2, _ in objs], cam)
    anns = []
    for (category, box, b2, has3d), (occ, trunc) in zip(objs, vis):
        anns.append(Annotation(fid, category, occ, trunc, b2,
                               box if has3d else None, _observation_angle(box)))
    return fid, anns, cam, plane


def generate_scene(cfg):
    if not isinstance(cfg, SceneConfig):
        raise ConfigError("expected a SceneConfig")
    scene = Scene({}, {}, {})
    for index in range(cfg.n_frames):
        fid, anns, cam, plane = _generate_frame(cfg, index)
        scene.frames[fid] = anns
        scene.cameras[fid] = cam
        scene.planes[fid] = plane
    return scene


# -- detector noise ------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Per-object perturbation of ground truth into scored detections.

    Center noise is applied on the ground footprint (x and z) with standard
    deviation ``center_sigma + center_sigma_per_m * depth``; sizes are scaled
    by ``exp(N(0, size_sigma))``. Scores decay as ``exp(-error / score_scale)``
    where ``error`` sums the center offset (m), absolute yaw error (rad) and
    absolute log size ratios.
    """

    center_sigma: float = 0.0
    center_sigma_per_m: float = 0.0
    yaw_sigma: float = 0.0
    size_sigma: float = 0.0
    drop_prob: float = 0.0
    clutter_rate: float = 0.0
    clutter_max_score: float = 0.3
    score_scale: float = 1.0

    def __post_init__(self):
        for name in ("center_sigma", "center_sigma_per_m", "yaw_sigma", "size_sigma",
                     "clutter_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("drop_prob", "clutter_max_score"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.score_scale <= 0:
            raise ConfigError("score_scale must be positive")


# moderate detector used by ``roadside3d synth --predictions``
DEFAULT_NOISE = NoiseModel(center_sigma=0.3, center_sigma_per_m=0.005, yaw_sigma=0.1,
                           size_sigma=0.05, drop_prob=0.1, clutter_rate=2.0)


def _frame_key(fid):
    return zlib.crc32(str(fid).encode("utf-8"))


def _perturb_box(rng, box, noise):
    sigma = noise.center_sigma + noise.center_sigma_per_m * abs(box.center[2])
    dx, dz = rng.normal(0.0, sigma, size=2)
    dyaw = rng.normal(0.0, noise.yaw_sigma)
    ls = rng.normal(0.0, noise.size_sigma, size=3)
    x, y, z = box.bottom_center
    new = Box3D.from_bottom_center(
        (x + dx, y, z + dz),
        box.length * math.exp(ls[0]), box.width * math.exp(ls[1]),
        box.height * math.exp(ls[2]), box.yaw + dyaw)
    err = math.hypot(dx, dz) + abs(dyaw) + float(np.abs(ls).sum())
    return new, math.exp(-err / noise.score_scale)


def _project_or_none(cam, box):
    if cam is None:
        return None
    try:
        return project_box_to_2d(cam, box)
    except BoxBehindCamera:
        return None


def _clutter(rng, fid, anns, noise, cam, plane, scene_cfg):
    n = int(rng.poisson(noise.clutter_rate))
    cats, p = _categories(scene_cfg)
    boxes3d = [a.box3d for a in anns if a.box3d is not None]
    out = []
    for _ in range(n):
        category = cats[int(rng.choice(len(cats), p=p))]
        box = None
        dims = _sample_size(rng, category, scene_cfg)
        if cam is not None and plane is not None:
            for _ in range(scene_cfg.max_attempts):
                box = _sample_box(rng, cam, plane, dims, scene_cfg)
                if box is None or _project_or_none(cam, box) is not None:
                    break
        elif boxes3d:
            lo = np.min([b.center for b in boxes3d], axis=0)
            hi = np.max([b.center for b in boxes3d], axis=0)
            c = rng.uniform(lo, hi)
            length, height, width = dims
            box = Box3D(tuple(c), length, width, height, float(rng.uniform(-math.pi, math.pi)))
        if box is None:
            continue
        score = float(rng.uniform(0.0, noise.clutter_max_score))
        out.append(Detection(fid, category, box, score, _project_or_none(cam, box)))
    return out


def perturb(gts, noise, seed, scene=None, scene_cfg=None):
    """Turn annotations into detections with ``noise``; fully determined by ``seed``.

    ``gts`` maps frame id -> annotations. With ``scene`` given, detections get
    projected 2D boxes and clutter rests on the frame's ground plane;
    otherwise clutter is spread over the bounding volume of the frame's
    objects and detections carry no 2D box.
    """
    scene_cfg = scene_cfg or SceneConfig()
    out = {}
    for fid in sorted(gts):
        cam = scene.cameras.get(fid) if scene is not None else None
        plane = scene.planes.get(fid) if scene is not None else None
        fk = _frame_key(fid)
        dets = []
        for k, ann in enumerate(gts[fid]):
            if ann.box3d is None:
                continue
            rng = _stream(seed, fk, 3, k)
            if rng.random() < noise.drop_prob:
                continue
            box, score = _perturb_box(rng, ann.box3d, noise)
            dets.append(Detection(fid, ann.category, box, score, _project_or_none(cam, box),
                                  ann.alpha))
        dets.extend(_clutter(_stream(seed, fk, 4), fid, gts[fid], noise, cam, plane, scene_cfg))
        out[fid] = dets
    return out


def gts_as_detections(gts):
    """Every 3D annotation as a score-1 detection."""
    return {fid: [Detection(fid, a.category, a.box3d, 1.0, a.box2d, a.alpha)
                  for a in anns if a.box3d is not None]
            for fid, anns in gts.items()}


# -- statistics ----------------------------------------------------------------------

@dataclass
class SceneStatistics:
    n_frames: int
    objects_2d: list            # per-frame count of annotations (all carry a 2D box)
    objects_3d: list            # per-frame count of annotations with a 3D box
    depth_histogram: dict       # 10 m bin start -> count of 3D objects
    occlusion_shares: dict      # level -> fraction
    truncation_shares: dict
    category_counts: dict
    size_mean: dict             # category -> (L, H, W)
    size_std: dict

    @property
    def density_2d(self):
        return float(np.mean(self.objects_2d))

    @property
    def density_3d(self):
        return float(np.mean(self.objects_3d))


def scene_statistics(frames):
    if not frames:
        raise ValueError("no frames")
    n2, n3 = [], []
    hist, cats = {}, {}
    occ = {0: 0, 1: 0, 2: 0}
    trunc = {0: 0, 1: 0, 2: 0}
    sizes = {}
    total = 0
    for fid in sorted(frames):
        anns = frames[fid]
        n2.append(len(anns))
        n3.append(sum(a.box3d is not None for a in anns))
        for a in anns:
            total += 1
            cats[a.category] = cats.get(a.category, 0) + 1
            occ[a.occlusion] += 1
            trunc[a.truncation] += 1
            if a.box3d is not None:
                b = int(math.floor(a.box3d.center[2] / 10.0)) * 10
                hist[b] = hist.get(b, 0) + 1
                sizes.setdefault(a.category, []).append(
                    (a.box3d.length, a.box3d.height, a.box3d.width))
    share = (lambda d: {k: (v / total if total else 0.0) for k, v in d.items()})
    size_mean = {c: tuple(float(v) for v in np.mean(s, axis=0)) for c, s in sorted(sizes.items())}
    size_std = {c: tuple(float(v) for v in np.std(s, axis=0, ddof=1 if len(s) > 1 else 0))
                for c, s in sorted(sizes.items())}
    return SceneStatistics(len(frames), n2, n3, dict(sorted(hist.items())), share(occ),
                           share(trunc), dict(sorted(cats.items())), size_mean, size_std)


def format_statistics(stats):
    lines = [
        f"frames: {stats.n_frames}",
        f"objects per frame: 2D {stats.density_2d:.3f}  3D {stats.density_3d:.3f}",
        "depth histogram (3D objects, 10 m bins):",
    ]
    peak = max(stats.depth_histogram.values(), default=0)
    for start, count in stats.depth_histogram.items():
        bar = "#" * (round(40 * count / peak) if peak else 0)
        lines.append(f"  {start:4d}-{start + 10:<4d} {count:7d} {bar}")
    lines.append("occlusion levels: " + "  ".join(
        f"{k}: {v:.3f}" for k, v in stats.occlusion_shares.items()))
    lines.append("truncation levels: " + "  ".join(
        f"{k}: {v:.3f}" for k, v in stats.truncation_shares.items()))
    lines.append("categories:")
    for c, n in stats.category_counts.items():
        lines.append(f"  {c:<18s} {n:7d}")
    lines.append("size mean/std (L H W, m):")
    for c in stats.size_mean:
        m, s = stats.size_mean[c], stats.size_std[c]
        lines.append(f"  {c:<18s} " + " ".join(f"{v:.3f}" for v in m)
                     + "  /  " + " ".join(f"{v:.3f}" for v in s))
    return "\n".join(lines) + "\n"


# -- config files and dataset trees -------------------------------------------------

def _floats(value, n, lineno, key):
    toks = value.split()
    if len(toks) != n:
        raise ParseError(lineno, 0, f"{key}: expected {n} values")
    try:
        vals = [float(t) for t in toks]
    except ValueError:
        raise ParseError(lineno, 0, f"{key}: expected numbers") from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError(lineno, 0, f"{key}: non-finite value")
    return vals


def parse_scene_config(text, **overrides):
    """Key-value scene config; pitch ranges are in degrees in the file."""
    kv = parse_key_values(text)
    base = SceneConfig()
    kwargs = {}
    weights, means, stds = {}, dict(base.size_mean), dict(base.size_std)
    for key, (lineno, value) in kv.items():
        if key == "seed" or key == "frames":
            vals = value.split()
            if len(vals) != 1 or not vals[0].isdigit():
                raise ParseError(lineno, 0, f"{key} must be a non-negative integer")
            kwargs["seed" if key == "seed" else "n_frames"] = int(vals[0])
        elif key == "image_size":
            w, h = _floats(value, 2, lineno, key)
            kwargs[key] = (int(w), int(h))
        elif key in ("camera_height_range", "focal_range", "depth_range"):
            kwargs[key] = tuple(_floats(value, 2, lineno, key))
        elif key == "pitch_range_deg":
            kwargs["pitch_range"] = tuple(math.radians(v) for v in _floats(value, 2, lineno, key))
        elif key in ("objects_per_frame", "extra_2d_per_frame", "depth_mode", "depth_spread"):
            kwargs[key] = _floats(value, 1, lineno, key)[0]
        elif key.startswith("weight."):
            weights[key[7:]] = _floats(value, 1, lineno, key)[0]
        elif key.startswith("noise."):
            continue
        elif key.startswith("size."):
            v = _floats(value, 6, lineno, key)
            means[key[5:]] = tuple(v[:3])
            stds[key[5:]] = tuple(v[3:])
        else:
            raise ParseError(lineno, 1, f"unknown key {key!r}")
    if weights:
        kwargs["category_weights"] = weights
    kwargs["size_mean"], kwargs["size_std"] = means, stds
    kwargs.update(overrides)
    return SceneConfig(**kwargs)


_NOISE_FIELDS = ("center_sigma", "center_sigma_per_m", "yaw_sigma", "size_sigma", "drop_prob",
                 "clutter_rate", "clutter_max_score", "score_scale")


def parse_noise_model(text, base=None):
    """Read ``noise.<field> = value`` keys; other keys are left to the scene parser."""
    kwargs = {}
    for key, (lineno, value) in parse_key_values(text).items():
        if not key.startswith("noise."):
            continue
        name = key[6:]
        if name not in _NOISE_FIELDS:
            raise ParseError(lineno, 1, f"unknown key {key!r}")
        kwargs[name] = _floats(value, 1, lineno, key)[0]
    return replace(base or NoiseModel(), **kwargs)


def write_scene(scene, out_dir, detections=None):
    """Write ``label_2/``, ``calib/`` and optionally ``pred/`` with one file per frame."""
    out = Path(out_dir)
    dirs = {"label_2": scene.label_text, "calib": scene.calib_text}
    for name, render in dirs.items():
        (out / name).mkdir(parents=True, exist_ok=True)
        for fid in sorted(scene.frames):
            (out / name / f"{fid}.txt").write_text(render(fid), encoding="utf-8", newline="\n")
    if detections is not None:
        (out / "pred").mkdir(parents=True, exist_ok=True)
        for fid in sorted(detections):
            (out / "pred" / f"{fid}.txt").write_text(
                serialize_labels(detections[fid]), encoding="utf-8", newline="\n")
