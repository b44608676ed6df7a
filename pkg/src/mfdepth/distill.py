"""Robust distillation gates, augmentations and the final loss composition."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import BinaryMask, DepthMap, ImagePlane, check_same_shape
from .costvolume import CostVolume
from .errors import DimensionError, DomainError

BETA = 1e-3


def robust_mask(l_ph_single: ImagePlane, l_ph_multi: ImagePlane) -> BinaryMask:
    """True where the single-frame depth reconstructs strictly better."""
    check_same_shape(l_ph_single, l_ph_multi)
    return BinaryMask(l_ph_single.data[..., 0] < l_ph_multi.data[..., 0])


def compose_gate(m: BinaryMask, m_r: BinaryMask | None, augmented: bool) -> BinaryMask:
    """Distillation gate: ``m AND m_r`` on augmented samples, ``m`` otherwise."""
    if not augmented:
        return m
    if m_r is None:
        raise DomainError("augmented samples need a robust mask")
    return m & m_r


def consistency_loss(
    d_multi: DepthMap,
    d_single: DepthMap,
    gate: BinaryMask,
    normalize: str = "mean",
) -> float:
    """L1 between multi-frame depth and the single-frame target on gated pixels.

    ``d_single`` is a constant target: a trainer must not propagate
    gradients into it. ``normalize="mean"`` divides by the gated pixel
    count, ``"sum"`` returns the raw sum.
    """
    check_same_shape(d_multi, d_single, gate)
    if normalize not in ("mean", "sum"):
        raise DomainError(f"unknown normalisation {normalize!r}")
    sel = gate.data & d_multi.valid & d_single.valid
    n = int(sel.sum())
    if n == 0:
        return 0.0
    total = float(np.abs(d_multi.data[sel] - d_single.data[sel]).sum())
    return total / n if normalize == "mean" else total


def static_frame_augment(
    target: ImagePlane,
    jitter_seed: int,
    gain_range: float = 0.1,
    bias_range: float = 0.05,
) -> ImagePlane:
    """Colour-jittered copy of ``target`` to stand in for a static source frame.

    Per channel: ``clip(gain * x + bias, 0, 1)`` with gain drawn from
    ``1 +- gain_range`` and bias from ``+- bias_range``.
    """
    rng = np.random.default_rng(jitter_seed)
    c = target.channels
    gain = 1.0 + rng.uniform(-gain_range, gain_range, size=c)
    bias = rng.uniform(-bias_range, bias_range, size=c)
    return ImagePlane(np.clip(target.data * gain + bias, 0.0, 1.0))


def zero_cost_volume_augment(volume: CostVolume) -> CostVolume:
    return CostVolume(
        volume.bins,
        np.zeros_like(volume.cost),
        np.ones_like(volume.valid),
    )


@dataclass(frozen=True)
class LossBreakdown:
    l_ph: float
    l_c: float
    l_sm: float
    l_ph_s: float
    l_sm_s: float
    total: float
    beta: float = BETA
    gate_ph_pixels: int = 0
    gate_ph_s_pixels: int = 0

    def recompose(self) -> float:
        return self.l_ph + self.l_c + self.beta * self.l_sm + self.l_ph_s + self.beta * self.l_sm_s

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def gated_mean(loss: ImagePlane, gate: np.ndarray) -> float:
    n = int(gate.sum())
    if n == 0:
        return 0.0
    return float(loss.data[..., 0][gate].sum() / n)


def total_loss(
    l_ph: ImagePlane,
    l_ph_s: ImagePlane,
    m: BinaryMask,
    m_i: BinaryMask,
    l_c: float,
    l_sm: float,
    l_sm_s: float,
    beta: float = BETA,
    valid: BinaryMask | None = None,
) -> LossBreakdown:
    """Final training loss with dynamic and inconsistent pixels gated out.

    ``l_ph`` and ``l_ph_s`` are per-pixel minimum reprojection maps of the
    multi-frame and single-frame depths. The multi-frame photometric term
    averages over ``(NOT m) AND (NOT m_i)``, the single-frame one over
    ``NOT m_i``; an empty gate contributes 0.
    """
    shape = check_same_shape(l_ph, l_ph_s, m, m_i)
    if l_ph.channels != 1 or l_ph_s.channels != 1:
        raise DimensionError("loss maps must have one channel")
    ok = np.ones(shape, dtype=bool) if valid is None else valid.data
    if ok.shape != shape:
        raise DimensionError("validity mask shape mismatch")
    gate_ph = ~m.data & ~m_i.data & ok
    gate_ph_s = ~m_i.data & ok
    ph = gated_mean(l_ph, gate_ph)
    ph_s = gated_mean(l_ph_s, gate_ph_s)
    total = ph + l_c + beta * l_sm + ph_s + beta * l_sm_s
    return LossBreakdown(
        ph, float(l_c), float(l_sm), ph_s, float(l_sm_s), total, beta, int(gate_ph.sum()), int(gate_ph_s.sum())
    )
