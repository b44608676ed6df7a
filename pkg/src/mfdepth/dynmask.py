"""Depth-inconsistency masks for dynamic regions.

Pipeline: median-align the over-fitting depth to the reference depth, flag
pixels where it is much deeper (co-directional movers) or shallower
(contra-directional movers), and keep only flags inside the band of heights
around the camera where road users live.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, CameraIntrinsics, DepthMap, check_same_shape
from .errors import DimensionError, DomainError, FitFailure
from .geometry import GroundPlane, fit_ground_plane

log = logging.getLogger(__name__)

CO_THRESHOLD = 2.0
CON_THRESHOLD = 0.85
GROUND_REGION = 1.0 / 3.0


def _joint_medians(a: DepthMap, b: DepthMap) -> tuple[float, float]:
    check_same_shape(a, b)
    joint = a.valid & b.valid
    if not joint.any():
        raise DomainError("no jointly valid pixels")
    return float(np.median(a.data[joint])), float(np.median(b.data[joint]))


def median_align(d_over: DepthMap, d_ref: DepthMap) -> DepthMap:
    """Scale ``d_over`` so its median matches ``d_ref`` over jointly valid pixels."""
    m_over, m_ref = _joint_medians(d_over, d_ref)
    return d_over.scaled(m_ref / m_over)


def directional_masks(
    d_over_aligned: DepthMap,
    d_ref: DepthMap,
    co_threshold: float = CO_THRESHOLD,
    con_threshold: float = CON_THRESHOLD,
) -> tuple[BinaryMask, BinaryMask]:
    """``(over > co * ref, over < con * ref)`` on jointly valid pixels."""
    if not co_threshold > 1.0 or not con_threshold < 1.0:
        raise DomainError("need co_threshold > 1 > con_threshold")
    check_same_shape(d_over_aligned, d_ref)
    joint = d_over_aligned.valid & d_ref.valid
    over, ref = d_over_aligned.data, d_ref.data
    return BinaryMask(joint & (over > co_threshold * ref)), BinaryMask(joint & (over < con_threshold * ref))


def ground_mask(d_ref: DepthMap, intrinsics: CameraIntrinsics, plane: GroundPlane) -> BinaryMask:
    """Pixels whose back-projected height lies strictly inside (-y_g, y_g)."""
    y_g = plane.camera_height
    if not y_g > 0:
        raise DomainError("camera height must be positive")
    v = np.arange(d_ref.height, dtype=np.float64)[:, None]
    y = (v - intrinsics.cy) / intrinsics.fy * d_ref.data
    return BinaryMask(d_ref.valid & (y > -y_g) & (y < y_g))


def inconsistency_mask(m_co: BinaryMask, m_con: BinaryMask, m_ground: BinaryMask) -> BinaryMask:
    check_same_shape(m_co, m_con, m_ground)
    return BinaryMask((m_co.data | m_con.data) & m_ground.data)


@dataclass(frozen=True, eq=False)
class InconsistencyMasks:
    m_co: BinaryMask
    m_con: BinaryMask
    m_ground: BinaryMask
    m_i: BinaryMask
    d_over_aligned: DepthMap
    plane: GroundPlane | None
    median_over: float
    median_ref: float
    co_threshold: float
    con_threshold: float

    @property
    def ground_fit_ok(self) -> bool:
        return self.plane is not None

    def provenance(self) -> dict:
        return {
            "y_g": None if self.plane is None else float(self.plane.camera_height),
            "ground_inlier_ratio": None if self.plane is None else float(self.plane.inlier_ratio),
            "median_over": self.median_over,
            "median_ref": self.median_ref,
            "scale": self.median_ref / self.median_over,
            "thresholds": {"co": self.co_threshold, "con": self.con_threshold},
            "ground_fit_ok": self.ground_fit_ok,
            "counts": {
                "m_co": self.m_co.count,
                "m_con": self.m_con.count,
                "m_ground": self.m_ground.count,
                "m_i": self.m_i.count,
            },
        }


def generate_masks(
    d_over: DepthMap,
    d_ref: DepthMap,
    intrinsics: CameraIntrinsics,
    ground_region: float = GROUND_REGION,
    co_threshold: float = CO_THRESHOLD,
    con_threshold: float = CON_THRESHOLD,
    seed: int = 0,
) -> InconsistencyMasks:
    """Full mask pipeline, returning every intermediate.

    If the ground plane cannot be fit, ``m_ground`` falls back to all-true
    and ``ground_fit_ok`` is false; the masks then rest on the depth ratios
    alone.
    """
    if d_over.shape != d_ref.shape:
        raise DimensionError(f"depth shapes differ: {d_over.shape} vs {d_ref.shape}")
    m_over, m_ref = _joint_medians(d_over, d_ref)
    aligned = d_over.scaled(m_ref / m_over)
    m_co, m_con = directional_masks(aligned, d_ref, co_threshold, con_threshold)
    try:
        plane = fit_ground_plane(d_ref, intrinsics, ground_region, rng=seed)
        m_ground = ground_mask(d_ref, intrinsics, plane)
    except FitFailure as exc:
        log.warning("ground fit failed, ground gate disabled: %s", exc)
        plane = None
        m_ground = BinaryMask.full(d_ref.shape, True)
    m_i = inconsistency_mask(m_co, m_con, m_ground)
    return InconsistencyMasks(
        m_co, m_con, m_ground, m_i, aligned, plane, m_over, m_ref, co_threshold, con_threshold
    )
