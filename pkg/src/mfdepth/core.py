"""Dense raster and camera types shared by every module.

Rasters are immutable wrappers around numpy arrays. Values are held in
float64 in memory; files on disk use float32 (see :mod:`mfdepth.io`).

Conventions: pixel centres sit on integer coordinates with the origin at
the top-left, ``u`` grows rightward and ``v`` downward. The camera frame
has x right, y down and z forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError

ORTHO_TOL = 1e-9


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ImagePlane:
    """H x W x C float raster: images, feature maps and per-pixel losses."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise DimensionError(f"image plane needs shape (H, W, C), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("image plane values must be finite")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


@dataclass(frozen=True, eq=False)
class DepthMap:
    """H x W depths with an explicit validity raster.

    Non-finite or non-positive entries are marked invalid when ``valid`` is
    omitted. Invalid pixels store 0 so that no NaN/Inf ever sits in memory.
    """

    data: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise DimensionError(f"depth map needs shape (H, W), got {arr.shape}")
        finite = np.isfinite(arr)
        if self.valid is None:
            valid = finite & (np.where(finite, arr, 0.0) > 0)
        else:
            valid = np.array(self.valid, dtype=bool)
            if valid.shape != arr.shape:
                raise DimensionError("validity raster does not match depth shape")
            if np.any(valid & ~finite) or np.any(arr[valid] <= 0):
                raise DomainError("valid depth pixels must be finite and > 0")
        arr = np.where(valid, arr, 0.0)
        object.__setattr__(self, "data", _frozen(arr))
        object.__setattr__(self, "valid", _frozen(valid))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def scaled(self, factor: float) -> "DepthMap":
        return DepthMap(self.data * factor, self.valid)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=bool)
        if arr.ndim != 2:
            raise DimensionError(f"mask needs shape (H, W), got {arr.shape}")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        check_same_shape(self, other)
        return BinaryMask(self.data & other.data)

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        check_same_shape(self, other)
        return BinaryMask(self.data | other.data)

    def __invert__(self) -> "BinaryMask":
        return BinaryMask(~self.data)

    @classmethod
    def full(cls, shape, value: bool = True) -> "BinaryMask":
        return cls(np.full(shape, value, dtype=bool))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def inverse(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Intrinsics for an image resized by ``factor`` (pixel-centre convention)."""
        return CameraIntrinsics(
            self.fx * factor,
            self.fy * factor,
            (self.cx + 0.5) * factor - 0.5,
            (self.cy + 0.5) * factor - 0.5,
        )

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}


@dataclass(frozen=True, eq=False)
class RigidPose:
    """SE(3) transform mapping points ``p`` to ``R @ p + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise DomainError("pose entries must be finite")
        if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise DomainError("rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", _frozen(R))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls()

    @classmethod
    def from_axis_angle(cls, axis_angle, translation=(0.0, 0.0, 0.0)) -> "RigidPose":
        """Build a pose from a rotation vector (Rodrigues) and a translation."""
        w = np.asarray(axis_angle, dtype=np.float64)
        theta = float(np.linalg.norm(w))
        if theta < 1e-15:
            return cls(np.eye(3), translation)
        k = w / theta
        K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
        R = np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)
        # re-orthonormalise so the 1e-9 invariant holds for any angle
        u, _, vt = np.linalg.svd(R)
        return cls(u @ vt, translation)

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> "RigidPose":
        Rt = self.rotation.T
        return RigidPose(Rt, -Rt @ self.translation)

    def compose(self, other: "RigidPose") -> "RigidPose":
        """Pose applying ``other`` first and then ``self``."""
        return RigidPose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (..., 3) array of points."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {
            "rotation": [float(x) for x in self.rotation.ravel()],
            "translation": [float(x) for x in self.translation],
        }


@dataclass(frozen=True, eq=False)
class ObjectMotion:
    """Translation of an object's point between views, in the source frame."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise DomainError("object motion must be finite")
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def zero(cls) -> "ObjectMotion":
        return cls()


def new_image_plane(height: int, width: int, channels: int = 1, fill: float = 0.0) -> ImagePlane:
    if height < 1 or width < 1 or channels < 1:
        raise DimensionError(f"dimensions must be >= 1, got {(height, width, channels)}")
    return ImagePlane(np.full((height, width, channels), fill, dtype=np.float64))


def check_same_shape(*rasters) -> tuple[int, int]:
    shapes = {tuple(r.shape[:2]) for r in rasters}
    if len(shapes) != 1:
        raise DimensionError(f"raster shapes disagree: {sorted(shapes)}")
    return shapes.pop()
