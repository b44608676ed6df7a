"""Plane-sweep cost volume over linear depth hypotheses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, CameraIntrinsics, DepthMap, ImagePlane, RigidPose, check_same_shape
from .errors import DimensionError, DomainError
from .geometry import bilinear_sample, pixel_rays, warp_points

CONSISTENCY_RATIO = 1.0


@dataclass(frozen=True, eq=False)
class DepthBins:
    d_min: float
    d_max: float
    values: np.ndarray

    @property
    def count(self) -> int:
        return len(self.values)

    @property
    def spacing(self) -> float:
        return (self.d_max - self.d_min) / (self.count - 1)

    def nearest_index(self, depth: np.ndarray) -> np.ndarray:
        idx = np.rint((np.asarray(depth) - self.d_min) / self.spacing)
        return np.clip(idx, 0, self.count - 1).astype(int)


def make_depth_bins(d_min: float, d_max: float, count: int) -> DepthBins:
    """``d_i = d_min + i (d_max - d_min) / (D - 1)`` for ``i = 0 .. D-1``."""
    if count < 2:
        raise DomainError(f"need at least 2 depth bins, got {count}")
    if not 0 < d_min < d_max:
        raise DomainError(f"need 0 < d_min < d_max, got {d_min}, {d_max}")
    i = np.arange(count, dtype=np.float64)
    values = d_min + i * (d_max - d_min) / (count - 1)
    values[-1] = d_max
    values.setflags(write=False)
    return DepthBins(float(d_min), float(d_max), values)


@dataclass(frozen=True, eq=False)
class CostVolume:
    """D x H x W matching costs; invalid cells hold ``+inf``."""

    bins: DepthBins
    cost: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if self.cost.shape != self.valid.shape or self.cost.shape[0] != self.bins.count:
            raise DimensionError("cost volume arrays disagree with the bin count")

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape[1:]

    def finite_cost(self, fill: float = -1.0) -> np.ndarray:
        """Costs with invalid cells replaced by ``fill`` (for file export)."""
        return np.where(self.valid, self.cost, fill)

    def is_degenerate(self, atol: float = 1e-12) -> bool:
        """True when every fully valid pixel has the same cost at all depths."""
        all_valid = self.valid.all(axis=0)
        if not all_valid.any():
            return True
        c = self.cost[:, all_valid]
        return bool(np.all(c.max(axis=0) - c.min(axis=0) <= atol))


def build_cost_volume(
    f_target: ImagePlane,
    f_source: ImagePlane,
    pose: RigidPose,
    intrinsics: CameraIntrinsics,
    bins: DepthBins,
    reduction: str = "sum",
) -> CostVolume:
    """L1 feature distance between the target and the source warped at each depth plane.

    ``reduction`` is ``"sum"`` (the plain L1 norm over channels) or
    ``"mean"``. ``intrinsics`` must be expressed at feature resolution.
    """
    if f_target.data.shape != f_source.data.shape:
        raise DimensionError(f"feature shapes differ: {f_target.data.shape} vs {f_source.data.shape}")
    if reduction not in ("sum", "mean"):
        raise DomainError(f"unknown reduction {reduction!r}")
    h, w = f_target.shape
    rays = pixel_rays(h, w, intrinsics)
    all_valid = np.ones((h, w), dtype=bool)
    cost = np.empty((bins.count, h, w))
    valid = np.empty((bins.count, h, w), dtype=bool)
    for i, d in enumerate(bins.values):
        grid = warp_points(rays * d, all_valid, pose, intrinsics, (h, w))
        warped, ok = bilinear_sample(f_source, grid)
        diff = np.abs(f_target.data - warped.data)
        c = diff.sum(axis=2) if reduction == "sum" else diff.mean(axis=2)
        cost[i] = np.where(ok.data, c, np.inf)
        valid[i] = ok.data
    return CostVolume(bins, cost, valid)


def depth_hints(volume: CostVolume) -> DepthMap:
    """Depth of the cheapest valid bin; ties go to the smaller depth."""
    cost = np.where(volume.valid, volume.cost, np.inf)
    idx = np.argmin(cost, axis=0)
    has_valid = volume.valid.any(axis=0)
    return DepthMap(volume.bins.values[idx], has_valid)


def consistency_mask(d_hints: DepthMap, d_single: DepthMap, ratio: float = CONSISTENCY_RATIO) -> BinaryMask:
    """Flag pixels whose relative disagreement exceeds ``ratio`` in either direction.

    ``max((a - b) / b, (b - a) / a) > ratio`` is evaluated as
    ``max(a, b) > (1 + ratio) * min(a, b)``, which is exact for the default
    ratio of 1 because doubling is exact in floating point.
    """
    check_same_shape(d_hints, d_single)
    a, b = d_hints.data, d_single.data
    both = d_hints.valid & d_single.valid
    flagged = np.maximum(a, b) > (1.0 + ratio) * np.minimum(a, b)
    return BinaryMask(flagged & both)
