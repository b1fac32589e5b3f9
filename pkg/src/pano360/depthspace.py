"""Disparity conversion, affine-invariant alignment, loss, and gradient.

Depth d becomes disparity 1/d, min-max normalized to [0, 1] per map over
valid pixels. The loss normalizes each map to zero median and unit mean
absolute deviation (computed on the joint valid mask) and takes the mean
absolute difference over valid pixels. Degenerate maps (zero spread) raise
instead of silently producing NaNs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateMapError, InsufficientDataError


@dataclass(frozen=True)
class AlignStats:
    """Translation (median) and scale (mean absolute deviation) of a map."""

    t: float
    s: float


def _as_mask(values: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is None:
        return np.ones(values.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != values.shape:
        raise DataError(f"mask shape {mask.shape} != map shape {values.shape}")
    return mask


def depth_to_disparity(depth: np.ndarray, mask: np.ndarray | None = None):
    """1/d over valid pixels, min-max normalized to [0, 1] per map.

    Returns (disparity, mask); invalid pixels are zeroed and masked out.
    """
    depth = np.asarray(depth, dtype=np.float64)
    mask = _as_mask(depth, mask)
    vals = depth[mask]
    if vals.size and (not np.all(np.isfinite(vals)) or np.any(vals <= 0.0)):
        raise DataError("valid depth pixels must be finite and > 0")
    disp = np.zeros_like(depth)
    disp[mask] = 1.0 / vals
    lo, hi = (disp[mask].min(), disp[mask].max()) if vals.size else (0.0, 0.0)
    if hi - lo <= 0.0:
        raise DegenerateMapError("disparity map has no spread over valid pixels")
    out = np.zeros_like(depth)
    out[mask] = (disp[mask] - lo) / (hi - lo)
    return out, mask


def align_stats(values: np.ndarray, mask: np.ndarray | None = None) -> AlignStats:
    """Median and mean absolute deviation over valid pixels."""
    values = np.asarray(values, dtype=np.float64)
    mask = _as_mask(values, mask)
    vals = values[mask]
    if vals.size < 2:
        raise InsufficientDataError(f"need >= 2 valid pixels, got {vals.size}")
    t = float(np.median(vals))
    s = float(np.mean(np.abs(vals - t)))
    if s <= 0.0:
        raise DegenerateMapError("map is constant over valid pixels")
    return AlignStats(t=t, s=s)


def _joint_mask(pred, gt, mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch {pred.shape} vs {gt.shape}")
    return pred, gt, _as_mask(pred, mask)


def affine_invariant_loss(
    pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None
) -> float:
    """Mean |normalized pred - normalized gt| over jointly valid pixels."""
    pred, gt, mask = _joint_mask(pred, gt, mask)
    sp = align_stats(pred, mask)
    sg = align_stats(gt, mask)
    p = (pred[mask] - sp.t) / sp.s
    g = (gt[mask] - sg.t) / sg.s
    return float(np.mean(np.abs(p - g)))


def affine_invariant_loss_grad(
    pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None
) -> np.ndarray:
    """Gradient of the loss w.r.t. pred, stop-gradient through pred's stats.

    Per valid pixel: sign(p_hat - g_hat) / (s(pred) * n_valid); zero at
    invalid pixels.
    """
    pred, gt, mask = _joint_mask(pred, gt, mask)
    sp = align_stats(pred, mask)
    sg = align_stats(gt, mask)
    p = (pred[mask] - sp.t) / sp.s
    g = (gt[mask] - sg.t) / sg.s
    grad = np.zeros(pred.shape, dtype=np.float64)
    grad[mask] = np.sign(p - g) / (sp.s * p.size)
    return grad


def frozen_stats_loss(
    pred: np.ndarray,
    gt: np.ndarray,
    mask: np.ndarray | None,
    pred_stats: AlignStats,
    gt_stats: AlignStats,
) -> float:
    """Loss with both maps' alignment statistics held fixed.

    This is the function the analytic gradient differentiates; finite
    difference checks must perturb pred through this, not through the
    re-aligned loss.
    """
    pred, gt, mask = _joint_mask(pred, gt, mask)
    p = (pred[mask] - pred_stats.t) / pred_stats.s
    g = (gt[mask] - gt_stats.t) / gt_stats.s
    return float(np.mean(np.abs(p - g)))


def median_align_depth(
    pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None
) -> np.ndarray:
    """Scale pred so its median over valid pixels matches gt's."""
    pred, gt, mask = _joint_mask(pred, gt, mask)
    if not mask.any():
        raise InsufficientDataError("no valid pixels for median alignment")
    mp = float(np.median(pred[mask]))
    mg = float(np.median(gt[mask]))
    if mp <= 0.0 or mg <= 0.0:
        raise DegenerateMapError("median alignment needs positive medians")
    return pred * (mg / mp)
