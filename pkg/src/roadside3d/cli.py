"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error (malformed or missing input).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import DevkitError, ParseError
from .geometry import Z_MAX_DEFAULT, ground_depth_map, gridded_depth_map
from .io import (parse_calib, parse_eval_config, parse_gridded, parse_labels,
                 serialize_depth_map, serialize_report)
from .metrics import Detection, EvalConfig, evaluate

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(path):
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"{path}: {e.strerror or e}") from None


def _parse(fn, path, *args, **kwargs):
    try:
        return fn(_read(path), *args, **kwargs)
    except ParseError as e:
        raise DataError(f"{path}:{e.line}:{e.column}: {e.reason}") from None


def _stems(directory):
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"{directory}: not a directory")
    return {p.stem: p for p in sorted(d.glob("*.txt"))}


def load_tree(gt_dir, pred_dir, calib_dir):
    """Frames keyed by filename stem; a missing prediction file means no detections."""
    gt_files = _stems(gt_dir)
    pred_files = _stems(pred_dir)
    calib_files = _stems(calib_dir)
    extra = sorted(set(pred_files) - set(gt_files))
    if extra:
        raise DataError(f"{pred_dir}: predictions for frames without ground truth: {extra[:5]}")
    gts, dets, planes = {}, {}, {}
    for fid, path in gt_files.items():
        gts[fid] = _parse(parse_labels, path, fid, kind="gt")
        if fid not in calib_files:
            raise DataError(f"{calib_dir}: no calibration for frame {fid}")
        planes[fid] = _parse(parse_calib, calib_files[fid])[1]
        dets[fid] = _load_pred(pred_files[fid], fid) if fid in pred_files else []
    return gts, dets, planes


def _load_pred(path, fid):
    """Detections of one frame; a ground-truth style file counts as score-1 detections."""
    items = _parse(parse_labels, path, fid)
    return [it if isinstance(it, Detection) else
            Detection(fid, it.category, it.box3d, 1.0, it.box2d, it.alpha)
            for it in items if isinstance(it, Detection) or it.box3d is not None]


def format_summary(report):
    """Rows of the "all" bucket; similarities in percent as in the report file."""
    lines = [f"{'category':<14}{'IoU':>6}{'AP':>9}{'ACS':>8}{'AOS':>8}{'AAS':>8}"
             f"{'AGS':>8}{'AGD':>8}{'Rope':>9}"]
    for (category, thr, bucket), c in report.cells.items():
        if bucket != "all":
            continue
        sims = "".join(f"{100 * v:>8.2f}" for v in (c.acs, c.aos, c.aas, c.ags))
        lines.append(f"{category:<14}{thr:>6.2f}{c.ap:>9.2f}{sims}{c.agd:>8.3f}{c.rope_score:>9.2f}")
    return "\n".join(lines) + "\n"


def cmd_evaluate(args):
    cfg = _parse(parse_eval_config, args.config) if args.config else EvalConfig()
    gts, dets, planes = load_tree(args.gt, args.pred, args.calib)
    threads = args.threads or os.cpu_count() or 1
    report = evaluate(gts, dets, cfg, planes, threads=threads)
    Path(args.out).write_text(serialize_report(report), encoding="utf-8", newline="\n")
    sys.stdout.write(format_summary(report))
    return EXIT_OK


def cmd_ground_depth(args):
    cam, plane, _ = _parse(parse_calib, args.calib)
    if args.zmax <= 0:
        raise DataError("--zmax must be positive")
    if args.gridded:
        gg = _parse(parse_gridded, args.gridded, plane)
        depth = gridded_depth_map(cam, gg, args.zmax)
    else:
        depth = ground_depth_map(cam, plane, args.zmax)
    Path(args.out).write_text(serialize_depth_map(depth), encoding="utf-8", newline="\n")
    return EXIT_OK


def cmd_synth(args):
    from .synth import (DEFAULT_NOISE, SceneConfig, generate_scene, parse_noise_model,
                        parse_scene_config, perturb, write_scene)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.frames is not None:
        overrides["n_frames"] = args.frames
    if args.config:
        cfg = _parse(parse_scene_config, args.config, **overrides)
        noise = _parse(parse_noise_model, args.config, DEFAULT_NOISE)
    else:
        cfg = SceneConfig(**overrides)
        noise = DEFAULT_NOISE
    scene = generate_scene(cfg)
    dets = perturb(scene.frames, noise, cfg.seed, scene=scene, scene_cfg=cfg) if args.predictions else None
    write_scene(scene, args.out, dets)
    return EXIT_OK


def cmd_stats(args):
    from .synth import format_statistics, scene_statistics
    files = _stems(args.labels)
    if not files:
        raise DataError(f"{args.labels}: no label files")
    frames = {fid: _parse(parse_labels, p, fid, kind="gt") for fid, p in files.items()}
    sys.stdout.write(format_statistics(scene_statistics(frames)))
    return EXIT_OK


def cmd_self_test(args):
    from .selftest import run_all
    return EXIT_OK if run_all(sys.stdout) else EXIT_DATA


def build_parser():
    p = _Parser(prog="roadside3d", description="Roadside monocular 3D detection devkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("evaluate", help="evaluate predictions against ground truth")
    e.add_argument("--gt", required=True, help="directory of ground-truth label files")
    e.add_argument("--pred", required=True, help="directory of prediction label files")
    e.add_argument("--calib", required=True, help="directory of calibration files")
    e.add_argument("--config", help="evaluation config (key = value)")
    e.add_argument("--out", required=True, help="report file to write")
    e.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    e.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("ground-depth", help="write the ground-plane depth map of a camera")
    g.add_argument("--calib", required=True)
    g.add_argument("--gridded", help="gridded ground file (gg_meta / gg lines)")
    g.add_argument("--out", required=True)
    g.add_argument("--zmax", type=float, default=Z_MAX_DEFAULT)
    g.set_defaults(func=cmd_ground_depth)

    s = sub.add_parser("synth", help="generate a synthetic dataset tree")
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="scene config (key = value)")
    s.add_argument("--seed", type=int)
    s.add_argument("--frames", type=int)
    s.add_argument("--predictions", action="store_true", help="also write noisy detections to pred/")
    s.set_defaults(func=cmd_synth)

    st = sub.add_parser("stats", help="dataset statistics of a label directory")
    st.add_argument("--labels", required=True)
    st.set_defaults(func=cmd_stats)

    t = sub.add_parser("self-test", help="run the embedded oracle checks")
    t.set_defaults(func=cmd_self_test)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except DevkitError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
