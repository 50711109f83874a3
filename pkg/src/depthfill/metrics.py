"""Evaluation metrics for predicted versus ground-truth depth."""

from dataclasses import asdict, dataclass

import numpy as np

# non-positive predictions fall back to this depth for ratio-based metrics
PRED_FLOOR_M = 1e-6


@dataclass
class MetricsReport:
    """Error statistics over the cap-filtered evaluation pixels.

    rmse and mae are in meters, rel is dimensionless, delta1..3 are the
    fractions of pixels with max(pred/gt, gt/pred) under 1.25^k, and
    irmse/imae are computed on inverse depth in 1/km. floored_pixels counts
    evaluated pixels whose non-positive prediction was floored to
    PRED_FLOOR_M for the ratio metrics.
    """

    rmse: float
    mae: float
    rel: float
    delta1: float
    delta2: float
    delta3: float
    irmse: float
    imae: float
    evaluated_pixels: int
    cap_meters: float
    floored_pixels: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(pred, gt, valid_gt=None, cap_meters=10.0) -> MetricsReport:
    """Compare a predicted depth map against ground truth.

    Only pixels with 0 < gt <= cap_meters (and inside valid_gt when given)
    are evaluated. rmse/mae/rel use the raw prediction; the ratio metrics
    (deltas, irmse, imae) floor non-positive predictions to PRED_FLOOR_M so
    they stay finite, and floored_pixels reports how often that happened.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} shapes differ")
    if not np.all(np.isfinite(pred)) or not np.all(np.isfinite(gt)):
        raise ValueError("metrics need finite prediction and ground truth")
    if cap_meters <= 0:
        raise ValueError(f"evaluation cap must be positive, got {cap_meters}")
    keep = (gt > 0) & (gt <= cap_meters)
    if valid_gt is not None:
        valid_gt = np.asarray(valid_gt, dtype=bool)
        if valid_gt.shape != gt.shape:
            raise ValueError(f"valid mask {valid_gt.shape} and ground truth {gt.shape} shapes differ")
        keep &= valid_gt
    n = int(np.count_nonzero(keep))
    if n == 0:
        raise ValueError("no pixels left to evaluate after cap filtering")

    p = pred[keep]
    g = gt[keep]
    err = p - g
    abs_err = np.abs(err)

    floored = p <= 0
    pf = np.where(floored, PRED_FLOOR_M, p)
    ratio = np.maximum(pf / g, g / pf)
    inv_err = 1000.0 / pf - 1000.0 / g  # inverse depth in 1/km

    return MetricsReport(
        rmse=float(np.sqrt(np.mean(err ** 2))),
        mae=float(np.mean(abs_err)),
        rel=float(np.mean(abs_err / g)),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
        irmse=float(np.sqrt(np.mean(inv_err ** 2))),
        imae=float(np.mean(np.abs(inv_err))),
        evaluated_pixels=n,
        cap_meters=float(cap_meters),
        floored_pixels=int(np.count_nonzero(floored)),
    )
