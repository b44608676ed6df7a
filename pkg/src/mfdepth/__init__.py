"""Multi-frame self-supervised depth toolkit: geometry, losses, cost volumes and dynamic masks."""

from .core import (
    BinaryMask,
    CameraIntrinsics,
    DepthMap,
    ImagePlane,
    ObjectMotion,
    RigidPose,
    check_same_shape,
    new_image_plane,
)
from .errors import DimensionError, DomainError, FitFailure, FormatError

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "CameraIntrinsics",
    "DepthMap",
    "DimensionError",
    "DomainError",
    "FitFailure",
    "FormatError",
    "ImagePlane",
    "ObjectMotion",
    "RigidPose",
    "check_same_shape",
    "new_image_plane",
]
