"""Text formats: label files, calibration, gridded ground, configs, reports, depth maps.

Label records are KITTI-compatible, one object per line::

    category truncation occlusion alpha x1 y1 x2 y2 H W L x y z rotation_y [score]

``x y z`` is the bottom-face center in the camera frame; it is converted to
the cuboid center on load. A record whose seven 3D fields are all -1000 is a
2D-only annotation. Every format here is plain text with LF line endings and
'.' decimals (``format=v1``).
"""

from __future__ import annotations

import io as _stdio
import json
import math
import re
import warnings
from decimal import Decimal

import numpy as np

from .errors import MissingSection, ParseError
from .geometry import (Box2D, Box3D, CameraModel, DepthMap, GriddedGround, GroundPlane,
                       RigidTransform)
from .metrics import (CATEGORIES, CATEGORY_GROUPS, Annotation, CellResult, Detection,
                      EvalConfig, MetricReport, bucket_label)

FORMAT_VERSION = "v1"
SENTINEL = -1000.0
DEFAULT_IMAGE_SIZE = (1920, 1080)

_FLOAT_RE = re.compile(r"[+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
_INT_RE = re.compile(r"[+-]?[0-9]+")
_TOKEN_RE = re.compile(r"[^ \t\r\f\v]+")


class LabelWarning(UserWarning):
    """Emitted for recoverable label oddities such as unknown categories."""


def _decode(text):
    if isinstance(text, (bytes, bytearray)):
        try:
            return bytes(text).decode("utf-8")
        except UnicodeDecodeError as e:
            line = bytes(text)[:e.start].count(b"\n") + 1
            raise ParseError(line, 0, "input is not valid UTF-8") from None
    return text


def _tokens(line):
    return [(m.group(), m.start() + 1) for m in _TOKEN_RE.finditer(line)]


def _float(tok, lineno, col):
    if not _FLOAT_RE.fullmatch(tok):
        raise ParseError(lineno, col, f"expected a number, got {tok!r}")
    v = float(tok)
    if not math.isfinite(v):
        raise ParseError(lineno, col, f"number out of range: {tok!r}")
    return v


def _int(tok, lineno, col):
    if not _INT_RE.fullmatch(tok):
        raise ParseError(lineno, col, f"expected an integer, got {tok!r}")
    return int(tok)


def _fmt(v):
    v = float(v)
    if v == SENTINEL:
        return "-1000"
    if v == 0.0:
        return "0"
    return repr(v)


# -- labels ------------------------------------------------------------------------

def _category(tok, lineno):
    name = tok.lower()
    if name in CATEGORIES:
        return name
    warnings.warn(LabelWarning(f"line {lineno}: unknown category {tok!r} kept as unknown_movable"),
                  stacklevel=3)
    return "unknown_movable"


def parse_labels(text, frame_id="", kind="auto"):
    """Parse a label file into Annotations (15 fields) or Detections (16 fields).

    ``kind`` may force "gt" or "pred"; with "auto" the first record decides.
    """
    text = _decode(text)
    if kind not in ("auto", "gt", "pred"):
        raise ValueError(f"kind must be 'auto', 'gt' or 'pred', not {kind!r}")
    expected = {"gt": 15, "pred": 16}.get(kind)
    out = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        toks = _tokens(line)
        if not toks:
            continue
        if expected is None:
            if len(toks) not in (15, 16):
                raise ParseError(lineno, 0, f"expected 15 or 16 fields, got {len(toks)}")
            expected = len(toks)
        if len(toks) != expected:
            raise ParseError(lineno, 0, f"expected {expected} fields, got {len(toks)}")
        out.append(_parse_record(toks, lineno, frame_id))
    return out


def _parse_record(toks, lineno, frame_id):
    category = _category(toks[0][0], lineno)
    trunc = _int(toks[1][0], lineno, toks[1][1])
    occ = _int(toks[2][0], lineno, toks[2][1])
    nums = [_float(t, lineno, c) for t, c in toks[3:]]
    alpha = nums[0]
    x1, y1, x2, y2 = nums[1:5]
    h, w, l, x, y, z, ry = nums[5:12]
    is_pred = len(toks) == 16
    try:
        if all(v == SENTINEL for v in (h, w, l, x, y, z, ry)):
            box3d = None
        else:
            box3d = Box3D.from_bottom_center((x, y, z), l, w, h, ry)
        if is_pred:
            if box3d is None:
                raise ValueError("a detection needs a 3D box")
            box2d = None if all(v == SENTINEL for v in (x1, y1, x2, y2)) else Box2D(x1, y1, x2, y2)
            return Detection(frame_id, category, box3d, nums[12], box2d, alpha)
        if trunc not in (0, 1, 2):
            raise ParseError(lineno, toks[1][1], f"truncation must be 0, 1 or 2, got {trunc}")
        if occ not in (0, 1, 2):
            raise ParseError(lineno, toks[2][1], f"occlusion must be 0, 1 or 2, got {occ}")
        return Annotation(frame_id, category, occ, trunc, Box2D(x1, y1, x2, y2), box3d, alpha)
    except ParseError:
        raise
    except ValueError as e:
        raise ParseError(lineno, 0, str(e)) from None


def serialize_labels(items):
    lines = []
    for it in items:
        if isinstance(it, Detection):
            head = [it.category, "-1", "-1"]
        else:
            head = [it.category, str(it.truncation), str(it.occlusion)]
        b2 = it.box2d
        box2d = (SENTINEL,) * 4 if b2 is None else (b2.xmin, b2.ymin, b2.xmax, b2.ymax)
        b3 = it.box3d
        if b3 is None:
            box3d = (SENTINEL,) * 7
        else:
            bx, by, bz = b3.bottom_center
            box3d = (b3.height, b3.width, b3.length, bx, by, bz, b3.yaw)
        vals = [it.alpha, *box2d, *box3d]
        if isinstance(it, Detection):
            vals.append(it.score)
        lines.append(" ".join(head + [_fmt(v) for v in vals]))
    return "".join(line + "\n" for line in lines)


# -- calibration -------------------------------------------------------------------

def _sections(text):
    """Yield (lineno, key, [(token, col), ...]) for 'key: values' lines."""
    text = _decode(text)
    for lineno, line in enumerate(text.split("\n"), start=1):
        toks = _tokens(line)
        if not toks:
            continue
        key, col = toks[0]
        if not key.endswith(":") or len(key) == 1:
            raise ParseError(lineno, col, f"expected 'name:' at line start, got {key!r}")
        yield lineno, key[:-1], toks[1:]


def _floats(vals, n, lineno, key):
    if len(vals) != n:
        raise ParseError(lineno, 0, f"{key}: expected {n} values, got {len(vals)}")
    return [_float(t, lineno, c) for t, c in vals]


def _plane(coeffs, lineno):
    try:
        return GroundPlane.from_coefficients(*coeffs)
    except ValueError as e:
        raise ParseError(lineno, 0, f"invalid ground plane: {e}") from None


def _rigid(vals, lineno):
    M = np.array(vals).reshape(3, 4)
    R = M[:, :3]
    if not np.allclose(R.T @ R, np.eye(3), rtol=0.0, atol=1e-6) or np.linalg.det(R) <= 0:
        raise ParseError(lineno, 0, "Tr_lidar_to_cam rotation is not a proper rotation")
    if not np.allclose(R.T @ R, np.eye(3), rtol=0.0, atol=1e-9):
        u, _, vt = np.linalg.svd(R)
        R = u @ vt
    return RigidTransform(R, M[:, 3])


def parse_calib(text):
    """Return (CameraModel, GroundPlane, RigidTransform or None)."""
    found = {}
    for lineno, key, vals in _sections(text):
        if key in found and key in ("P2", "g", "Tr_lidar_to_cam", "image_size"):
            raise ParseError(lineno, 0, f"duplicate section {key!r}")
        if key == "P2":
            found[key] = (lineno, _floats(vals, 12, lineno, key))
        elif key == "g":
            found[key] = (lineno, _floats(vals, 4, lineno, key))
        elif key == "Tr_lidar_to_cam":
            found[key] = (lineno, _floats(vals, 12, lineno, key))
        elif key == "image_size":
            if len(vals) != 2:
                raise ParseError(lineno, 0, "image_size: expected 2 values")
            found[key] = (lineno, [_int(t, lineno, c) for t, c in vals])
    for key in ("P2", "g"):
        if key not in found:
            raise MissingSection(key)
    w, h = found.get("image_size", (0, DEFAULT_IMAGE_SIZE))[1]
    lineno, p = found["P2"]
    P = np.array(p).reshape(3, 4)
    try:
        cam = CameraModel.from_matrix(P[:, :3], w, h)
    except ValueError as e:
        raise ParseError(lineno, 0, f"invalid intrinsics: {e}") from None
    plane = _plane(found["g"][1], found["g"][0])
    tr = None
    if "Tr_lidar_to_cam" in found:
        tr = _rigid(found["Tr_lidar_to_cam"][1], found["Tr_lidar_to_cam"][0])
    return cam, plane, tr


def parse_gridded(text, fallback=None):
    """Parse 'gg_meta: cell_size ox oz' plus 'gg: i j a b c d' lines.

    The fallback plane comes from a 'g:' line in the same text, else from
    ``fallback``.
    """
    meta = None
    cells = {}
    g = None
    for lineno, key, vals in _sections(text):
        if key == "gg_meta":
            if meta is not None:
                raise ParseError(lineno, 0, "duplicate section 'gg_meta'")
            meta = _floats(vals, 3, lineno, key)
            if not meta[0] > 0:
                raise ParseError(lineno, vals[0][1], "cell_size must be positive")
        elif key == "gg":
            if len(vals) != 6:
                raise ParseError(lineno, 0, f"gg: expected 6 values, got {len(vals)}")
            i = _int(vals[0][0], lineno, vals[0][1])
            j = _int(vals[1][0], lineno, vals[1][1])
            if (i, j) in cells:
                raise ParseError(lineno, 0, f"duplicate grid cell ({i}, {j})")
            cells[(i, j)] = _plane(_floats(vals[2:], 4, lineno, key), lineno)
        elif key == "g":
            g = _plane(_floats(vals, 4, lineno, key), lineno)
    if meta is None:
        raise MissingSection("gg_meta")
    fallback = g or fallback
    if fallback is None:
        raise MissingSection("g")
    return GriddedGround(meta[0], (meta[1], meta[2]), cells, fallback)


def serialize_calib(cam, plane, transform=None):
    p = [cam.fx, 0.0, cam.cx, 0.0, 0.0, cam.fy, cam.cy, 0.0, 0.0, 0.0, 1.0, 0.0]
    lines = [
        "P2: " + " ".join(_fmt(v) for v in p),
        "g: " + " ".join(_fmt(v) for v in plane.coefficients),
        f"image_size: {cam.width} {cam.height}",
    ]
    if transform is not None:
        M = np.hstack([transform.rotation, transform.translation[:, None]])
        lines.append("Tr_lidar_to_cam: " + " ".join(_fmt(v) for v in M.reshape(-1)))
    return "\n".join(lines) + "\n"


def serialize_gridded(gg):
    lines = [
        "gg_meta: " + " ".join(_fmt(v) for v in (gg.cell_size, *gg.origin)),
        "g: " + " ".join(_fmt(v) for v in gg.fallback.coefficients),
    ]
    for (i, j), plane in sorted(gg.cells.items()):
        lines.append(f"gg: {i} {j} " + " ".join(_fmt(v) for v in plane.coefficients))
    return "\n".join(lines) + "\n"


# -- key-value configs -----------------------------------------------------------------

def parse_key_values(text):
    """'key = value' lines; '#' starts a comment. Returns {key: (lineno, value)}."""
    text = _decode(text)
    out = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(lineno, 1, "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError(lineno, 1, "empty key")
        if key in out:
            raise ParseError(lineno, 1, f"duplicate key {key!r}")
        out[key] = (lineno, value)
    return out


def _parse_bucket(label, lineno):
    if label == "all":
        return (0.0, math.inf)
    m = re.fullmatch(r"([0-9.]+)-([0-9.]+|inf)", label)
    if not m:
        raise ParseError(lineno, 0, f"bad range bucket {label!r}")
    lo = _float(m.group(1), lineno, 0)
    hi = math.inf if m.group(2) == "inf" else _float(m.group(2), lineno, 0)
    if not lo < hi:
        raise ParseError(lineno, 0, f"empty range bucket {label!r}")
    return (lo, hi)


def parse_eval_config(text):
    kv = parse_key_values(text)
    kwargs = {}
    thresholds = {}
    for key, (lineno, value) in kv.items():
        toks = value.split()
        if key.startswith("iou."):
            group = key[4:]
            if group not in CATEGORY_GROUPS:
                raise ParseError(lineno, 1, f"unknown category group {group!r}")
            ths = tuple(_float(t, lineno, 0) for t in toks)
            if not ths or not all(0 < t <= 1 for t in ths):
                raise ParseError(lineno, 0, "IoU thresholds must lie in (0, 1]")
            thresholds[group] = ths
        elif key == "categories":
            bad = [t for t in toks if t not in CATEGORIES]
            if bad or not toks:
                raise ParseError(lineno, 0, f"unknown categories {bad}")
            kwargs["categories"] = tuple(toks)
        elif key == "ranges":
            if not toks:
                raise ParseError(lineno, 0, "no range buckets")
            kwargs["range_buckets"] = tuple(_parse_bucket(t, lineno) for t in toks)
        elif key in ("omega1", "omega2"):
            v = _float(value, lineno, 0)
            if not v > 0:
                raise ParseError(lineno, 0, f"{key} must be positive")
            kwargs[key] = v
        elif key == "ags_normalizer":
            if value not in ("pred", "gt"):
                raise ParseError(lineno, 0, "ags_normalizer must be 'pred' or 'gt'")
            kwargs[key] = value
        else:
            raise ParseError(lineno, 1, f"unknown key {key!r}")
    base = EvalConfig()
    merged = dict(base.iou_thresholds)
    merged.update(thresholds)
    return EvalConfig(iou_thresholds=merged, **kwargs)


def serialize_eval_config(cfg):
    lines = [
        "categories = " + " ".join(cfg.categories),
        *(f"iou.{g} = " + " ".join(_fmt(t) for t in ths)
          for g, ths in sorted(cfg.iou_thresholds.items())),
        "ranges = " + " ".join(bucket_label(a, b) if not (a > 0 and math.isinf(b))
                               else f"{a:g}-inf" for a, b in cfg.range_buckets),
        f"omega1 = {_fmt(cfg.omega1)}",
        f"omega2 = {_fmt(cfg.omega2)}",
        f"ags_normalizer = {cfg.ags_normalizer}",
    ]
    return "\n".join(lines) + "\n"


# -- metric reports --------------------------------------------------------------------

_CELL_FLOATS = ("ap", "acs", "aos", "aas", "agd", "ags", "rope_score")
# similarities live in [0, 1] in memory and are written in percent
_PERCENT = ("acs", "aos", "aas", "ags")
_CELL_INTS = ("tp", "fp", "fn", "op_tp")


def _round6(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return float(f"{obj:.6g}") if math.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {str(k): _round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round6(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _bucket_sort_key(label):
    if label == "all":
        return (0, 0.0, label)
    m = re.match(r"([0-9.]+)-", label)
    return (1, float(m.group(1)) if m else math.inf, label)


def _cell_sort_key(key):
    category, thr, bucket = key
    rank = CATEGORIES.index(category) if category in CATEGORIES else len(CATEGORIES)
    return (rank, category, thr, _bucket_sort_key(bucket))


def _from_percent(v):
    # exact decimal shift, so 6-digit values come back as the same float
    return float(Decimal(repr(float(v))).scaleb(-2))


def serialize_report(report):
    """JSON tree with 6 significant digits and (category, threshold, bucket) order."""
    cells = []
    for key in sorted(report.cells, key=_cell_sort_key):
        c = report.cells[key]
        entry = {"category": key[0], "iou_threshold": float(key[1]), "range": key[2]}
        for name in _CELL_FLOATS:
            entry[name] = float(getattr(c, name)) * (100.0 if name in _PERCENT else 1.0)
        for name in _CELL_INTS:
            entry[name] = int(getattr(c, name))
        entry["undefined"] = bool(c.undefined)
        entry["op_score"] = None if c.op_score is None else float(c.op_score)
        cells.append(entry)
    doc = {"format": FORMAT_VERSION, "meta": report.meta, "cells": cells}
    return json.dumps(_round6(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def parse_report(text):
    text = _decode(text)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.lineno, e.colno, e.msg) from None
    except RecursionError:
        raise ParseError(1, 0, "document nested too deeply") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_VERSION:
        raise ParseError(1, 0, f"not a {FORMAT_VERSION} report")
    meta, cells = doc.get("meta"), doc.get("cells")
    if not isinstance(meta, dict) or not isinstance(cells, list):
        raise ParseError(1, 0, "report needs 'meta' object and 'cells' list")
    report = MetricReport(meta=meta)
    for n, entry in enumerate(cells):
        where = f"cells[{n}]"
        if not isinstance(entry, dict):
            raise ParseError(0, 0, f"{where} is not an object")
        try:
            key = (entry["category"], entry["iou_threshold"], entry["range"])
            if not (isinstance(key[0], str) and isinstance(key[2], str)
                    and type(key[1]) in (int, float)):
                raise TypeError
            res = CellResult()
            for name in _CELL_FLOATS:
                v = entry[name]
                if type(v) not in (int, float):
                    raise TypeError
                setattr(res, name, _from_percent(v) if name in _PERCENT else float(v))
            for name in _CELL_INTS:
                v = entry[name]
                if type(v) is not int:
                    raise TypeError
                setattr(res, name, v)
            if type(entry["undefined"]) is not bool:
                raise TypeError
            res.undefined = entry["undefined"]
            op = entry["op_score"]
            if op is not None and type(op) not in (int, float):
                raise TypeError
            res.op_score = None if op is None else float(op)
        except KeyError as e:
            raise ParseError(0, 0, f"{where}: missing field {e.args[0]!r}") from None
        except TypeError:
            raise ParseError(0, 0, f"{where}: field of the wrong type") from None
        key = (key[0], float(key[1]), key[2])
        if key in report.cells:
            raise ParseError(0, 0, f"{where}: duplicate cell {key}")
        report.cells[key] = res
    return report


# -- depth maps ------------------------------------------------------------------------

def serialize_depth_map(depth):
    buf = _stdio.StringIO()
    buf.write(f"{depth.width} {depth.height} {_fmt(depth.z_max)}\n")
    np.savetxt(buf, depth.values, fmt="%.6f")
    return buf.getvalue()


def parse_depth_map(text):
    text = _decode(text)
    lines = text.split("\n")
    head = _tokens(lines[0])
    if len(head) != 3:
        raise ParseError(1, 0, "header must be 'width height zmax'")
    w = _int(head[0][0], 1, head[0][1])
    h = _int(head[1][0], 1, head[1][1])
    z_max = _float(head[2][0], 1, head[2][1])
    rows = [ln for ln in lines[1:] if ln.strip()]
    if len(rows) != h:
        raise ParseError(len(lines), 0, f"expected {h} rows, got {len(rows)}")
    values = np.empty((h, w))
    for r, ln in enumerate(rows):
        toks = ln.split()
        if len(toks) != w:
            raise ParseError(r + 2, 0, f"expected {w} values, got {len(toks)}")
        for c, t in enumerate(toks):
            values[r, c] = math.inf if t == "inf" else _float(t, r + 2, 0)
    return DepthMap(values, z_max)
