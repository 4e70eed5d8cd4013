"""Camera-frame geometry: boxes, pinhole projection, ground planes and depth maps.

Frame convention (KITTI-style camera frame): x right, y down, z forward.
The "vertical" axis is y, so a box's top face has the smaller y value and
its bottom face the larger one. Yaw rotates about +y; at yaw 0 the box
length runs along +x. The bird's-eye-view (BEV) footprint lives in the
(x, z) plane.

Ground planes ``alpha*x + beta*y + gamma*z + d = 0`` are stored with a
unit normal and ``d < 0``: the normal points from the camera toward the
ground, so a level camera at height h sees ``(0, 1, 0, -h)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoxBehindCamera, DegenerateInput, PointBehindCamera

EPS_DEPTH = 1e-6
Z_MAX_DEFAULT = 200.0
INVALID = math.inf

__all__ = [
    "EPS_DEPTH", "Z_MAX_DEFAULT", "INVALID",
    "CameraModel", "RigidTransform", "Box3D", "Box2D", "GroundPlane",
    "GriddedGround", "DepthMap",
    "normalize_angle", "compose_transforms", "box_corners", "ground_corners",
    "bev_corners", "project_point", "project_points", "project_box_to_2d",
    "ground_center", "fit_plane", "ground_depth_map", "fit_gridded_ground",
    "gridded_depth_map", "backproject",
]


def normalize_angle(theta):
    """Wrap an angle into (-pi, pi]."""
    theta = math.fmod(float(theta), 2.0 * math.pi)
    if theta <= -math.pi:
        theta += 2.0 * math.pi
    elif theta > math.pi:
        theta -= 2.0 * math.pi
    return theta


def _vec3(p):
    arr = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite vector {p!r}")
    return arr


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @classmethod
    def from_matrix(cls, K, width, height):
        K = np.asarray(K, dtype=float)
        return cls(float(K[0, 0]), float(K[1, 1]), float(K[0, 2]), float(K[1, 2]),
                   int(width), int(height))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """x -> rotation @ x + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = _vec3(self.translation)
        if not np.allclose(R.T @ R, np.eye(3), rtol=0.0, atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        return cls(M[:3, :3], M[:3, 3])

    @property
    def matrix(self):
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def inverse(self):
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def apply(self, points):
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))


def compose_transforms(a, b):
    """Return the transform that applies ``b`` first, then ``a``."""
    return RigidTransform(a.rotation @ b.rotation,
                          a.rotation @ b.translation + a.translation)


@dataclass(frozen=True)
class Box3D:
    """Cuboid in the camera frame; ``center`` is the geometric center."""

    center: tuple
    length: float
    width: float
    height: float
    yaw: float = 0.0

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        if len(c) != 3 or not all(math.isfinite(v) for v in c):
            raise ValueError(f"invalid center {self.center!r}")
        for name in ("length", "width", "height"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)
        if not math.isfinite(self.yaw):
            raise ValueError("yaw must be finite")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def bottom_center(self):
        x, y, z = self.center
        return (x, y + self.height / 2.0, z)

    @classmethod
    def from_bottom_center(cls, bottom, length, width, height, yaw=0.0):
        x, y, z = (float(v) for v in bottom)
        return cls((x, y - float(height) / 2.0, z), length, width, height, yaw)

    @property
    def footprint_area(self):
        return self.length * self.width

    @property
    def volume(self):
        return self.length * self.width * self.height


@dataclass(frozen=True)
class Box2D:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin <= self.xmax and self.ymin <= self.ymax):
            raise ValueError(f"inverted 2D box {self}")

    @property
    def area(self):
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def iou(self, other):
        iw = min(self.xmax, other.xmax) - max(self.xmin, other.xmin)
        ih = min(self.ymax, other.ymax) - max(self.ymin, other.ymin)
        if iw <= 0 or ih <= 0:
            return 0.0
        inter = iw * ih
        union = self.area + other.area - inter
        return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class GroundPlane:
    alpha: float
    beta: float
    gamma: float
    d: float

    def __post_init__(self):
        n = math.sqrt(self.alpha ** 2 + self.beta ** 2 + self.gamma ** 2)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length; use GroundPlane.from_coefficients")

    @classmethod
    def from_coefficients(cls, alpha, beta, gamma, d):
        """Normalize to a unit normal and orient it so that ``d < 0``.

        A plane through the camera origin (``d == 0``) is oriented with the
        first nonzero normal component positive.
        """
        coeffs = np.array([alpha, beta, gamma, d], dtype=float)
        if not np.all(np.isfinite(coeffs)):
            raise DegenerateInput("non-finite plane coefficients")
        n = np.linalg.norm(coeffs[:3])
        if n == 0.0:
            raise DegenerateInput("plane normal is zero")
        # already-unit normals are kept as given so normalizing is idempotent
        if abs(n - 1.0) > 4 * np.finfo(float).eps:
            coeffs = coeffs / n
        if coeffs[3] > 0:
            coeffs = -coeffs
        elif coeffs[3] == 0:
            lead = coeffs[np.flatnonzero(coeffs[:3])[0]]
            if lead < 0:
                coeffs = -coeffs
            coeffs[3] = 0.0
        return cls(*(float(v) for v in coeffs))

    @property
    def normal(self):
        return np.array([self.alpha, self.beta, self.gamma])

    @property
    def coefficients(self):
        return (self.alpha, self.beta, self.gamma, self.d)

    def signed_distance(self, points):
        pts = np.asarray(points, dtype=float)
        return pts @ self.normal + self.d


@dataclass(frozen=True)
class GriddedGround:
    """Piecewise-planar ground: one plane per ``cell_size`` square in (x, z)."""

    cell_size: float = 5.0
    origin: tuple = (0.0, 0.0)
    cells: dict = field(default_factory=dict)
    fallback: GroundPlane | None = None

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if self.fallback is None:
            raise ValueError("a fallback plane is required")

    def cell_index(self, x, z):
        ox, oz = self.origin
        return (math.floor((x - ox) / self.cell_size),
                math.floor((z - oz) / self.cell_size))

    def plane_at(self, x, z):
        return self.cells.get(self.cell_index(x, z), self.fallback)


@dataclass(eq=False)
class DepthMap:
    """Per-pixel depth; invalid pixels hold ``INVALID`` (+inf)."""

    values: np.ndarray
    z_max: float

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def valid(self):
        return np.isfinite(self.values)

    def __eq__(self, other):
        if not isinstance(other, DepthMap):
            return NotImplemented
        return self.z_max == other.z_max and np.array_equal(self.values, other.values)


# Bottom face, counterclockwise in (x, z) (i.e. seen from above), in the box's
# local (length, width) axes.
_LOCAL_BOTTOM = np.array([[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]])


def bev_corners(box):
    """Footprint corners as a (4, 2) array of (x, z), counterclockwise."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dl = _LOCAL_BOTTOM[:, 0] * box.length
    dw = _LOCAL_BOTTOM[:, 1] * box.width
    # Rotation about +y: x' = c*x + s*z, z' = -s*x + c*z.
    x = box.center[0] + c * dl + s * dw
    z = box.center[2] - s * dl + c * dw
    return np.stack([x, z], axis=1)


def box_corners(box):
    """The 8 corners as an (8, 3) array.

    Indices 0-3 are the bottom face (larger y), counterclockwise seen from
    above; index i+4 sits directly above index i.
    """
    bev = bev_corners(box)
    y_bottom = box.center[1] + box.height / 2.0
    y_top = box.center[1] - box.height / 2.0
    out = np.empty((8, 3))
    out[:4, 0] = out[4:, 0] = bev[:, 0]
    out[:4, 2] = out[4:, 2] = bev[:, 1]
    out[:4, 1] = y_bottom
    out[4:, 1] = y_top
    return out


def ground_corners(box):
    return box_corners(box)[:4]


def project_point(cam, p):
    x, y, z = _vec3(p)
    if z <= EPS_DEPTH:
        raise PointBehindCamera(f"point depth {z} is not in front of the camera")
    return (cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy)


def project_points(cam, points):
    """Vectorized :func:`project_point` for an (N, 3) array; no depth check."""
    pts = np.asarray(points, dtype=float)
    u = cam.fx * pts[:, 0] / pts[:, 2] + cam.cx
    v = cam.fy * pts[:, 1] / pts[:, 2] + cam.cy
    return np.stack([u, v], axis=1)


def project_box_to_2d(cam, box):
    """Amodal 2D box: min/max over all 8 projected corners, not clipped."""
    corners = box_corners(box)
    if np.any(corners[:, 2] <= EPS_DEPTH):
        raise BoxBehindCamera("box has a corner behind the camera")
    uv = project_points(cam, corners)
    return Box2D(float(uv[:, 0].min()), float(uv[:, 1].min()),
                 float(uv[:, 0].max()), float(uv[:, 1].max()))


def ground_center(box, plane):
    """Orthogonal projection of the cuboid center onto ``plane``."""
    c = np.array(box.center)
    n = plane.normal
    return c - (c @ n + plane.d) * n


def fit_plane(points):
    """Total-least-squares plane through ``points`` (N >= 3, not collinear)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DegenerateInput("expected an (N, 3) array of points")
    if len(pts) < 3:
        raise DegenerateInput(f"need at least 3 points, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise DegenerateInput("non-finite point coordinates")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[0] == 0.0 or s[1] <= 1e-9 * max(s[0], 1.0):
        raise DegenerateInput("points are collinear")
    normal = vt[2]
    return GroundPlane.from_coefficients(*normal, -float(normal @ centroid))


def _pixel_grid(cam):
    u = np.arange(cam.width, dtype=float)
    v = np.arange(cam.height, dtype=float)
    return np.meshgrid(u, v)


def _ray_plane_depth(cam, plane, u, v):
    """Depth Z where the pixel ray meets ``plane``; nan where it never does."""
    denom = (plane.alpha * ((u - cam.cx) / cam.fx)
             + plane.beta * ((v - cam.cy) / cam.fy)
             + plane.gamma)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return np.where(denom != 0.0, -plane.d / denom, np.nan)


def _apply_validity(z, z_max):
    ok = (z > 0.0) & (z <= z_max)
    return np.where(ok, z, INVALID)


def ground_depth_map(cam, plane, z_max=Z_MAX_DEFAULT):
    """Depth of the ground plane at every pixel (integer pixel coordinates)."""
    if not z_max > 0:
        raise ValueError("z_max must be positive")
    u, v = _pixel_grid(cam)
    z = _ray_plane_depth(cam, plane, u, v)
    return DepthMap(_apply_validity(z, z_max), float(z_max))


def backproject(cam, u, v, z):
    """Camera-frame point at depth ``z`` along the ray through pixel (u, v)."""
    u, v, z = (np.asarray(a, dtype=float) for a in (u, v, z))
    x = (u - cam.cx) / cam.fx * z
    y = (v - cam.cy) / cam.fy * z
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def fit_gridded_ground(points, cell_size=5.0, min_points_per_cell=3, origin=(0.0, 0.0)):
    pts = np.asarray(points, dtype=float)
    fallback = fit_plane(pts)
    ox, oz = (float(v) for v in origin)
    ii = np.floor((pts[:, 0] - ox) / cell_size).astype(np.int64)
    jj = np.floor((pts[:, 2] - oz) / cell_size).astype(np.int64)
    cells = {}
    keys = np.stack([ii, jj], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    for k, (i, j) in enumerate(uniq):
        members = pts[inverse == k]
        if len(members) < min_points_per_cell:
            continue
        try:
            cells[(int(i), int(j))] = fit_plane(members)
        except DegenerateInput:
            # collinear cell: leave it to the fallback plane
            continue
    return GriddedGround(float(cell_size), (ox, oz), cells, fallback)


def _cell_window(cam, gg, i, j, plane):
    """Pixel rows/cols that can see cell (i, j) of ``plane``; None if none can.

    For a cell wholly in front of the camera the in-cell hits project inside
    the image box of its four corners, so only that window is evaluated.
    """
    ox, oz = gg.origin
    cs = gg.cell_size
    z0, z1 = oz + j * cs, oz + (j + 1) * cs
    if z1 <= 0.0:
        return None
    if z0 <= EPS_DEPTH or plane.beta == 0.0:
        return slice(0, cam.height), slice(0, cam.width)
    xs = np.array([ox + i * cs, ox + (i + 1) * cs] * 2)
    zs = np.array([z0, z0, z1, z1])
    ys = -(plane.d + plane.alpha * xs + plane.gamma * zs) / plane.beta
    us = cam.fx * xs / zs + cam.cx
    vs = cam.fy * ys / zs + cam.cy
    c0, c1 = max(int(math.floor(us.min())) - 1, 0), min(int(math.ceil(us.max())) + 2, cam.width)
    r0, r1 = max(int(math.floor(vs.min())) - 1, 0), min(int(math.ceil(vs.max())) + 2, cam.height)
    if c0 >= c1 or r0 >= r1:
        return None
    return slice(r0, r1), slice(c0, c1)


def gridded_depth_map(cam, gg, z_max=Z_MAX_DEFAULT):
    """Nearest valid in-cell intersection per pixel, else the fallback plane."""
    if not z_max > 0:
        raise ValueError("z_max must be positive")
    u, v = _pixel_grid(cam)
    best = np.full(u.shape, INVALID)
    ox, oz = gg.origin
    rx = (u - cam.cx) / cam.fx
    for (i, j), plane in sorted(gg.cells.items()):
        win = _cell_window(cam, gg, i, j, plane)
        if win is None:
            continue
        z = _apply_validity(_ray_plane_depth(cam, plane, u[win], v[win]), z_max)
        inside = np.isfinite(z)
        zc = np.where(inside, z, 0.0)
        inside &= np.floor((rx[win] * zc - ox) / gg.cell_size) == i
        inside &= np.floor((zc - oz) / gg.cell_size) == j
        sub = best[win]
        sub[inside] = np.minimum(sub[inside], z[inside])
    missing = ~np.isfinite(best)
    if missing.any():
        z = _apply_validity(_ray_plane_depth(cam, gg.fallback, u, v), z_max)
        best[missing] = z[missing]
    return DepthMap(best, float(z_max))
