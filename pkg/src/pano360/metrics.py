"""Depth evaluation metrics with masking and optional median alignment.

Ground-truth pixels equal to 0 or above 10 m are excluded; predictions may
be median-aligned first to remove global scale. Delta thresholds are strict
(max(a/d, d/a) < 1.25^j).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .depthspace import median_align_depth
from .errors import DataError, InsufficientDataError

MAX_EVAL_DEPTH_M = 10.0


@dataclass(frozen=True)
class EvalReport:
    abs_rel: float
    mae: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n_pixels: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def to_text(self) -> str:
        return "\n".join(f"{k} {v}" for k, v in asdict(self).items())

    @classmethod
    def from_json(cls, s: str) -> "EvalReport":
        return cls(**json.loads(s))


def eval_mask(gt: np.ndarray, gt_mask: np.ndarray | None = None) -> np.ndarray:
    """Valid iff 0 < gt <= 10 m and the map's own validity mask is set."""
    gt = np.asarray(gt, dtype=np.float64)
    m = (gt > 0.0) & (gt <= MAX_EVAL_DEPTH_M)
    if gt_mask is not None:
        gt_mask = np.asarray(gt_mask, dtype=bool)
        if gt_mask.shape != gt.shape:
            raise DataError("gt mask shape mismatch")
        m &= gt_mask
    return m


def compute_metrics(
    pred: np.ndarray,
    gt: np.ndarray,
    gt_mask: np.ndarray | None = None,
    align: str = "median",
) -> EvalReport:
    """Evaluate predicted depth against ground truth depth (meters)."""
    if align not in ("median", "none"):
        raise DataError(f"unknown alignment {align!r}")
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch {pred.shape} vs {gt.shape}")
    m = eval_mask(gt, gt_mask)
    if not m.any():
        raise InsufficientDataError("no valid pixels after evaluation masking")
    if align == "median":
        pred = median_align_depth(pred, gt, m)
    a = pred[m]
    d = gt[m]
    if np.any(a <= 0.0):
        raise DataError("predicted depth must be positive on evaluated pixels")
    err = np.abs(a - d)
    ratio = np.maximum(a / d, d / a)
    return EvalReport(
        abs_rel=float(np.mean(err / d)),
        mae=float(np.mean(err)),
        rmse=float(np.sqrt(np.mean((a - d) ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(a) - np.log(d)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        n_pixels=int(m.sum()),
    )


def mean_report(reports: list[EvalReport]) -> EvalReport:
    """Unweighted mean over per-sample reports; n_pixels sums."""
    if not reports:
        raise InsufficientDataError("no reports to aggregate")
    fields = ["abs_rel", "mae", "rmse", "rmse_log", "delta1", "delta2", "delta3"]
    agg = {f: float(np.mean([getattr(r, f) for r in reports])) for f in fields}
    return EvalReport(n_pixels=sum(r.n_pixels for r in reports), **agg)
