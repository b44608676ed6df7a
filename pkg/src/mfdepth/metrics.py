"""Depth evaluation statistics with optional median scaling and a depth cap."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .core import DepthMap
from .errors import DimensionError, DomainError

MAX_DEPTH = 80.0
MIN_DEPTH = 1e-3
CSV_COLUMNS = ["frame", "abs_rel", "sq_rel", "rmse", "rmse_log", "d1", "d2", "d3", "scale", "pixels"]


@dataclass(frozen=True)
class EvalReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    scale: float
    pixel_count: int

    def row(self, frame: str) -> list:
        return [
            frame, self.abs_rel, self.sq_rel, self.rmse, self.rmse_log,
            self.delta1, self.delta2, self.delta3, self.scale, self.pixel_count,
        ]


def median_scale(pred: DepthMap, gt: DepthMap) -> tuple[DepthMap, float]:
    """Scale ``pred`` by ``median(gt) / median(pred)`` over jointly valid pixels."""
    if pred.shape != gt.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    joint = pred.valid & gt.valid
    if not joint.any():
        raise DomainError("no jointly valid pixels")
    scale = float(np.median(gt.data[joint]) / np.median(pred.data[joint]))
    return pred.scaled(scale), scale


def compute_errors(gt: np.ndarray, pred: np.ndarray) -> dict:
    """The seven statistics on flat arrays of matched positive depths."""
    thresh = np.maximum(gt / pred, pred / gt)
    diff = gt - pred
    log_diff = np.log(gt) - np.log(pred)
    return {
        "abs_rel": float(np.mean(np.abs(diff) / gt)),
        "sq_rel": float(np.mean(diff ** 2 / gt)),
        "rmse": float(np.sqrt(np.mean(diff ** 2))),
        "rmse_log": float(np.sqrt(np.mean(log_diff ** 2))),
        "delta1": float(np.mean(thresh < 1.25)),
        "delta2": float(np.mean(thresh < 1.25 ** 2)),
        "delta3": float(np.mean(thresh < 1.25 ** 3)),
    }


def evaluate(
    pred: DepthMap,
    gt: DepthMap,
    max_depth: float = MAX_DEPTH,
    apply_median_scale: bool = True,
) -> EvalReport:
    """Evaluate on jointly valid pixels with ground truth in ``(0, max_depth]``.

    The median ratio is taken over the evaluated pixels; the (scaled)
    prediction is then clamped to ``[1e-3, max_depth]``.
    """
    if pred.shape != gt.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    sel = pred.valid & gt.valid & (gt.data > 0) & (gt.data <= max_depth)
    n = int(sel.sum())
    if n == 0:
        raise DomainError("no evaluable pixels")
    g = gt.data[sel]
    p = pred.data[sel]
    scale = 1.0
    if apply_median_scale:
        scale = float(np.median(g) / np.median(p))
        p = p * scale
    p = np.clip(p, MIN_DEPTH, max_depth)
    return EvalReport(**compute_errors(g, p), scale=scale, pixel_count=n)


def aggregate(reports: list[EvalReport]) -> EvalReport:
    """Per-frame mean of every statistic, in the given order; pixel counts are summed."""
    if not reports:
        raise DomainError("nothing to aggregate")
    names = [f.name for f in fields(EvalReport) if f.name != "pixel_count"]
    means = {k: float(np.mean([getattr(r, k) for r in reports])) for k in names}
    return EvalReport(**means, pixel_count=sum(r.pixel_count for r in reports))


def write_csv(path, rows: list[tuple[str, EvalReport]], total: EvalReport | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for frame, report in rows:
            writer.writerow(_fmt(report.row(frame)))
        if total is not None:
            writer.writerow(_fmt(total.row("aggregate")))


def _fmt(row: list) -> list:
    return [repr(float(v)) if isinstance(v, float) else v for v in row]
