"""SSIM, photometric reconstruction error and edge-aware smoothness."""

from __future__ import annotations

import numpy as np

from .core import DepthMap, ImagePlane, check_same_shape
from .errors import DimensionError, DomainError

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
DEFAULT_ALPHA = 0.85


def box3(x: np.ndarray) -> np.ndarray:
    """3x3 mean filter over the first two axes with reflect padding."""
    p = np.pad(x, ((1, 1), (1, 1)) + ((0, 0),) * (x.ndim - 2), mode="reflect")
    h, w = x.shape[:2]
    acc = np.zeros_like(x, dtype=np.float64)
    for dy in range(3):
        for dx in range(3):
            acc += p[dy:dy + h, dx:dx + w]
    return acc / 9.0


def _check_pair(a: ImagePlane, b: ImagePlane) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"image shapes differ: {a.data.shape} vs {b.data.shape}")


def ssim(a: ImagePlane, b: ImagePlane) -> ImagePlane:
    """Per-pixel SSIM (3x3 box window), averaged over channels; one channel out."""
    _check_pair(a, b)
    x, y = a.data, b.data
    if min(x.shape[:2]) < 2:
        raise DimensionError("SSIM reflect padding needs at least 2 rows and columns")
    mu_x, mu_y = box3(x), box3(y)
    sigma_x = box3(x * x) - mu_x * mu_x
    sigma_y = box3(y * y) - mu_y * mu_y
    sigma_xy = box3(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * sigma_xy + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sigma_x + sigma_y + SSIM_C2)
    s = np.clip(num / den, -1.0, 1.0)
    return ImagePlane(s.mean(axis=2, keepdims=True))


def photometric_error(target: ImagePlane, recon: ImagePlane, alpha: float = DEFAULT_ALPHA) -> ImagePlane:
    """``alpha/2 * (1 - SSIM) + (1 - alpha) * L1``, the L1 term averaged over channels."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    _check_pair(target, recon)
    l1 = np.abs(target.data - recon.data).mean(axis=2, keepdims=True)
    if alpha == 0.0:
        return ImagePlane(l1)
    pe = alpha / 2.0 * (1.0 - ssim(target, recon).data) + (1.0 - alpha) * l1
    return ImagePlane(np.maximum(pe, 0.0))


def min_reprojection(losses) -> ImagePlane:
    losses = list(losses)
    if not losses:
        raise DomainError("need at least one loss map")
    check_same_shape(*losses)
    return ImagePlane(np.minimum.reduce([l.data for l in losses]))


def smoothness(depth: DepthMap, image: ImagePlane) -> float:
    """Edge-aware smoothness of the mean-normalised inverse depth.

    Forward differences; the x and y terms are each averaged over the
    pixels where their difference exists and then summed.
    """
    check_same_shape(depth, image)
    if not depth.valid.all():
        raise DomainError("smoothness needs every depth pixel valid and positive")
    inv = 1.0 / depth.data
    disp = inv / inv.mean()
    img = image.data
    grad_dx = np.abs(disp[:, :-1] - disp[:, 1:])
    grad_dy = np.abs(disp[:-1, :] - disp[1:, :])
    grad_ix = np.abs(img[:, :-1] - img[:, 1:]).mean(axis=2)
    grad_iy = np.abs(img[:-1, :] - img[1:, :]).mean(axis=2)
    total = 0.0
    if grad_dx.size:
        total += float(np.mean(grad_dx * np.exp(-grad_ix)))
    if grad_dy.size:
        total += float(np.mean(grad_dy * np.exp(-grad_iy)))
    return total
