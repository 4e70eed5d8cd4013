"""Evaluation devkit for roadside monocular 3D object detection."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BoxBehindCamera, ConfigError, DegenerateInput, DevkitError, EmptyTruePositives,
    FrameMismatch, MissingPlane, MissingSection, ParseError, PointBehindCamera,
)
from .geometry import (  # noqa: E402
    Box2D, Box3D, CameraModel, DepthMap, GriddedGround, GroundPlane, RigidTransform,
    box_corners, compose_transforms, fit_gridded_ground, fit_plane, ground_center,
    ground_corners, ground_depth_map, gridded_depth_map, project_box_to_2d, project_point,
)
from .metrics import (  # noqa: E402
    Annotation, Detection, EvalConfig, MatchSet, MetricReport, PrCurve, aas, acs,
    agd_ags, aos, ap_r40, evaluate, iou_3d, match_frame, rope_score, rotated_iou_bev,
)

__all__ = [
    "BoxBehindCamera", "ConfigError", "DegenerateInput", "DevkitError", "EmptyTruePositives",
    "FrameMismatch", "MissingPlane", "MissingSection", "ParseError", "PointBehindCamera",
    "Box2D", "Box3D", "CameraModel", "DepthMap", "GriddedGround", "GroundPlane", "RigidTransform",
    "box_corners", "compose_transforms", "fit_gridded_ground", "fit_plane", "ground_center",
    "ground_corners", "ground_depth_map", "gridded_depth_map", "project_box_to_2d", "project_point",
    "Annotation", "Detection", "EvalConfig", "MatchSet", "MetricReport", "PrCurve", "aas", "acs",
    "agd_ags", "aos", "ap_r40", "evaluate", "iou_3d", "match_frame", "rope_score", "rotated_iou_bev",
]
