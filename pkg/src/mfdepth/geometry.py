"""Pinhole geometry, re-projection warps and robust ground fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, CameraIntrinsics, DepthMap, ImagePlane, ObjectMotion, RigidPose
from .errors import DimensionError, DomainError, FitFailure

Z_EPSILON = 1e-6
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def backproject(pixel, depth: float, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Lift pixel ``(u, v)`` at z-depth ``depth`` into the camera frame."""
    if not depth > 0:
        raise DomainError(f"depth must be positive, got {depth}")
    u, v = pixel
    return depth * np.array([(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0])


def transform_point(p, pose: RigidPose, motion: ObjectMotion | None = None) -> np.ndarray:
    """Rigid transform followed by the additive object translation."""
    out = pose.rotation @ np.asarray(p, dtype=np.float64) + pose.translation
    if motion is not None:
        out = out + motion.translation
    return out


def project(p, intrinsics: CameraIntrinsics):
    """Pixel coordinates of ``p``, or ``None`` when it is not in front of the camera."""
    x, y, z = (float(c) for c in p)
    if not z > Z_EPSILON:
        return None
    return (intrinsics.fx * x / z + intrinsics.cx, intrinsics.fy * y / z + intrinsics.cy)


def pixel_rays(height: int, width: int, intrinsics: CameraIntrinsics) -> np.ndarray:
    """(H, W, 3) rays ``K^-1 [u, v, 1]`` with unit z."""
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    return np.stack(
        [(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, np.ones_like(u)], axis=-1
    )


def backproject_depth(depth: DepthMap, intrinsics: CameraIntrinsics) -> np.ndarray:
    """(H, W, 3) camera-frame points; invalid pixels hold zeros."""
    return pixel_rays(depth.height, depth.width, intrinsics) * depth.data[..., None]


def project_points(points: np.ndarray, intrinsics: CameraIntrinsics):
    """Vectorised :func:`project`; returns ``(u, v, in_front)`` arrays."""
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    in_front = z > Z_EPSILON
    safe_z = np.where(in_front, z, 1.0)
    u = np.where(in_front, intrinsics.fx * x / safe_z + intrinsics.cx, 0.0)
    v = np.where(in_front, intrinsics.fy * y / safe_z + intrinsics.cy, 0.0)
    return u, v, in_front


@dataclass(frozen=True, eq=False)
class CorrespondenceGrid:
    """Per-target-pixel source coordinates ``(u, v)`` with validity."""

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    @classmethod
    def identity(cls, height: int, width: int) -> "CorrespondenceGrid":
        v, u = np.mgrid[0:height, 0:width].astype(np.float64)
        return cls(u, v, np.ones((height, width), dtype=bool))


BOUNDS_TOLERANCE = 1e-6
SNAP_TOLERANCE = 1e-9


def in_bounds(u: np.ndarray, v: np.ndarray, height: int, width: int) -> np.ndarray:
    """Inside ``[0, W-1] x [0, H-1]``, forgiving round-off of a few ulps at the border."""
    eps = BOUNDS_TOLERANCE
    return (u >= -eps) & (u <= width - 1 + eps) & (v >= -eps) & (v <= height - 1 + eps)


def warp_points(
    points: np.ndarray,
    valid: np.ndarray,
    pose: RigidPose,
    intrinsics: CameraIntrinsics,
    source_shape: tuple[int, int],
) -> CorrespondenceGrid:
    u, v, in_front = project_points(pose.apply(points), intrinsics)
    h, w = source_shape
    ok = valid & in_front & in_bounds(u, v, h, w)
    u = np.where(ok, np.clip(_snap(u), 0.0, w - 1), 0.0)
    v = np.where(ok, np.clip(_snap(v), 0.0, h - 1), 0.0)
    return CorrespondenceGrid(u, v, ok)


def _snap(x: np.ndarray) -> np.ndarray:
    # coordinates a few ulps off a pixel centre land on it, so identity warps copy exactly
    r = np.rint(x)
    return np.where(np.abs(x - r) < SNAP_TOLERANCE, r, x)


def warp_grid(
    depth: DepthMap,
    pose: RigidPose,
    intrinsics: CameraIntrinsics,
    image_shape: tuple[int, int] | None = None,
) -> CorrespondenceGrid:
    """Source-image coordinates of every target pixel under a static scene.

    ``image_shape`` is the source raster's (H, W); it defaults to the depth
    map's and must match it, since target and source share one camera.
    """
    if image_shape is not None and tuple(image_shape) != depth.shape:
        raise DimensionError(f"depth {depth.shape} does not match image {tuple(image_shape)}")
    points = backproject_depth(depth, intrinsics)
    return warp_points(points, depth.valid, pose, intrinsics, depth.shape)


def bilinear_sample(source: ImagePlane, grid: CorrespondenceGrid) -> tuple[ImagePlane, BinaryMask]:
    """Bilinear lookup of ``source`` at the grid; invalid cells become 0."""
    h, w = source.shape
    valid = grid.valid & in_bounds(grid.u, grid.v, h, w)
    u = np.where(valid, np.clip(grid.u, 0.0, w - 1), 0.0)
    v = np.where(valid, np.clip(grid.v, 0.0, h - 1), 0.0)
    x0 = np.clip(np.floor(u), 0, max(w - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(v), 0, max(h - 2, 0)).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (u - x0)[..., None]
    wy = (v - y0)[..., None]
    img = source.data
    top = img[y0, x0] * (1.0 - wx) + img[y0, x1] * wx
    bottom = img[y1, x0] * (1.0 - wx) + img[y1, x1] * wx
    out = top * (1.0 - wy) + bottom * wy
    out = np.where(valid[..., None], out, 0.0)
    return ImagePlane(out), BinaryMask(valid)


def source_frame_motion(world_displacement, pose: RigidPose) -> ObjectMotion:
    """Object term for a point that moved by ``world_displacement`` from source to target time.

    The world frame is the target camera frame and ``pose`` maps target to
    source, so the point sat at ``X - m`` in the world at source time, i.e.
    ``R X + t - R m`` in the source frame.
    """
    return ObjectMotion(-(pose.rotation @ np.asarray(world_displacement, dtype=np.float64)))


@dataclass(frozen=True)
class OverfitResult:
    depth: float
    residual: float
    at_boundary: bool


def _static_pixels(rays, depths, pose, intrinsics):
    pts = rays * depths[:, None]
    return project_points(pts @ pose.rotation.T + pose.translation, intrinsics)


def overfit_depths(
    pixels: np.ndarray,
    true_depths: np.ndarray,
    pose: RigidPose,
    intrinsics: CameraIntrinsics,
    motions: np.ndarray,
    rel_tol: float = 1e-6,
    bracket: tuple[float, float] = (0.1, 10.0),
):
    """Vectorised over-fit depth solver.

    For each pixel, finds the depth whose static re-projection lands closest
    to the re-projection of the true point moved by its object translation
    (rows of ``motions``, source frame). Golden-section search runs on the
    bracket ``[true/10, true*10]`` clipped to the depths that stay in front
    of the source camera; the pixel distance along that segment is unimodal
    because the static projection traces the epipolar line monotonically.

    Returns ``(depth, residual, at_boundary, moved_ok)`` arrays. Entries with
    ``moved_ok`` false have a moved point behind the source camera and carry
    NaN depth/residual.
    """
    pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    true_depths = np.atleast_1d(np.asarray(true_depths, dtype=np.float64))
    motions = np.broadcast_to(np.asarray(motions, dtype=np.float64), (len(pixels), 3))
    if np.any(true_depths <= 0):
        raise DomainError("true depths must be positive")
    rays = np.stack(
        [(pixels[:, 0] - intrinsics.cx) / intrinsics.fx, (pixels[:, 1] - intrinsics.cy) / intrinsics.fy,
         np.ones(len(pixels))],
        axis=1,
    )
    moved = (rays * true_depths[:, None]) @ pose.rotation.T + pose.translation + motions
    tu, tv, moved_ok = project_points(moved, intrinsics)

    # depths keeping the static point in front of the source camera: a*d + b > eps
    a = rays @ pose.rotation[2]
    b = pose.translation[2]
    lo = true_depths * bracket[0]
    hi = true_depths * bracket[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        edge = (Z_EPSILON - b) / a
    lo = np.where(a > 0, np.maximum(lo, edge * (1.0 + 1e-9)), lo)
    hi = np.where(a < 0, np.minimum(hi, edge * (1.0 - 1e-9)), hi)
    feasible = np.where(a == 0, b > Z_EPSILON, lo < hi) & moved_ok
    lo = np.where(feasible, lo, true_depths)
    hi = np.where(feasible, hi, true_depths)

    def residual(d):
        u, v, ok = _static_pixels(rays, d, pose, intrinsics)
        return np.where(ok, np.hypot(u - tu, v - tv), np.inf)

    lo0, hi0 = lo.copy(), hi.copy()
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = residual(x1), residual(x2)
    while np.any(hi - lo > rel_tol * 0.5 * (hi + lo)):
        left = f1 < f2
        # keep [lo, x2] where the left probe wins, else [x1, hi]
        hi, lo = np.where(left, x2, hi), np.where(left, lo, x1)
        x1, x2 = (
            np.where(left, hi - GOLDEN * (hi - lo), x2),
            np.where(left, x1, lo + GOLDEN * (hi - lo)),
        )
        fp = residual(np.where(left, x1, x2))
        f1, f2 = np.where(left, fp, f2), np.where(left, f1, fp)

    depth = 0.5 * (lo + hi)
    res = residual(depth)
    f_lo, f_hi = residual(lo0), residual(hi0)
    use_lo = f_lo < res
    use_hi = ~use_lo & (f_hi < res)
    depth = np.where(use_lo, lo0, np.where(use_hi, hi0, depth))
    res = np.where(use_lo, f_lo, np.where(use_hi, f_hi, res))
    span = hi0 - lo0
    at_boundary = use_lo | use_hi | (depth - lo0 <= 2 * rel_tol * depth) | (hi0 - depth <= 2 * rel_tol * depth)
    at_boundary &= span > 0
    depth = np.where(moved_ok, depth, np.nan)
    res = np.where(moved_ok, res, np.nan)
    return depth, res, at_boundary | ~feasible, moved_ok


def overfit_depth(
    pixel,
    true_depth: float,
    pose: RigidPose,
    intrinsics: CameraIntrinsics,
    motion: ObjectMotion,
) -> OverfitResult:
    """Depth a static-world photometric fit converges to on a moving point.

    Raises :class:`DomainError` when the moved point is behind the source camera.
    """
    if not true_depth > 0:
        raise DomainError(f"true depth must be positive, got {true_depth}")
    depth, res, boundary, ok = overfit_depths(
        np.asarray([pixel], dtype=np.float64), np.array([true_depth]), pose, intrinsics,
        motion.translation[None, :],
    )
    if not ok[0]:
        raise DomainError("moved point does not project in front of the source camera")
    return OverfitResult(float(depth[0]), float(res[0]), bool(boundary[0]))


@dataclass(frozen=True, eq=False)
class GroundPlane:
    """Plane ``normal . p + offset = 0`` with the camera on the positive side."""

    normal: np.ndarray
    offset: float
    camera_height: float
    inlier_ratio: float = 1.0

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal + self.offset)


def _plane_through(p):
    n = np.cross(p[1] - p[0], p[2] - p[0])
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return None
    n = n / norm
    return n, -float(n @ p[0])


def _lstsq_plane(points: np.ndarray):
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid, full_matrices=False)
    n = vt[-1]
    return n, -float(n @ centroid)


def fit_ground_plane(
    depth: DepthMap,
    intrinsics: CameraIntrinsics,
    sample_region: float = 1.0 / 3.0,
    rng: np.random.Generator | int | None = 0,
    iterations: int = 200,
    threshold_fraction: float = 0.01,
    min_inlier_ratio: float = 0.2,
) -> GroundPlane:
    """RANSAC plane over back-projected pixels from the bottom of the image.

    The inlier threshold is ``threshold_fraction`` of the region's median
    depth. The winning hypothesis is refit by least squares on its inliers.
    """
    if not 0 < sample_region <= 1:
        raise DomainError("sample_region must lie in (0, 1]")
    rng = np.random.default_rng(rng)
    first_row = int(math.floor(depth.height * (1.0 - sample_region)))
    region = np.zeros(depth.shape, dtype=bool)
    region[first_row:] = True
    region &= depth.valid
    points = backproject_depth(depth, intrinsics)[region]
    if len(points) < 3:
        raise FitFailure(f"ground fit needs >= 3 valid points, region has {len(points)}")
    threshold = threshold_fraction * float(np.median(points[:, 2]))

    best_count, best_model = -1, None
    for _ in range(iterations):
        model = _plane_through(points[rng.choice(len(points), 3, replace=False)])
        if model is None:
            continue
        count = int(np.count_nonzero(np.abs(points @ model[0] + model[1]) < threshold))
        if count > best_count:
            best_count, best_model = count, model
    if best_model is None:
        raise FitFailure("all RANSAC samples were degenerate")

    inliers = np.abs(points @ best_model[0] + best_model[1]) < threshold
    ratio = inliers.sum() / len(points)
    if ratio < min_inlier_ratio:
        raise FitFailure(f"ground inlier ratio {ratio:.3f} below {min_inlier_ratio}")
    normal, offset = _lstsq_plane(points[inliers]) if inliers.sum() >= 3 else best_model
    if offset < 0:
        normal, offset = -normal, -offset
    if offset <= 0:
        raise FitFailure("fitted plane passes through the camera centre")
    return GroundPlane(normal, offset, offset, float(ratio))
