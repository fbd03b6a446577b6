"""Disparity and depth error metrics with boundary-region restriction.

Boundary pixels, where the disparity jumps between surfaces, are where mean
readouts fail worst; :func:`boundary_mask` isolates them with a dependency-
free gradient threshold (max absolute difference to the valid 4-neighbors,
then one pixel of cross-shaped dilation), standing in for an edge-detector
mask over the same population.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distribution import CameraRig
from .groundtruth import DisparityMap

__all__ = [
    "MetricValues",
    "EvalReport",
    "epe",
    "pixel_threshold_error",
    "rmse_depth",
    "absr_depth",
    "boundary_mask",
    "evaluate",
    "DEFAULT_PE_THRESHOLDS",
]

DEFAULT_PE_THRESHOLDS = (1.0, 3.0)


def _common_valid(pred: DisparityMap, gt: DisparityMap) -> np.ndarray:
    if pred.values.shape != gt.values.shape:
        raise ValueError("prediction and ground truth shapes disagree")
    return pred.valid & gt.valid


def _masked_errors(pred: DisparityMap, gt: DisparityMap, extra_mask=None) -> np.ndarray:
    mask = _common_valid(pred, gt)
    if extra_mask is not None:
        mask = mask & extra_mask
    if not mask.any():
        raise ValueError("no commonly valid pixels")
    return pred.values[mask] - gt.values[mask]


def epe(pred: DisparityMap, gt: DisparityMap) -> float:
    """End-point error: mean |pred - gt| over pixels valid in both maps."""
    return float(np.mean(np.abs(_masked_errors(pred, gt))))


def pixel_threshold_error(pred: DisparityMap, gt: DisparityMap, k: float) -> float:
    """Percentage of commonly valid pixels with |pred - gt| strictly above k."""
    if not k > 0.0:
        raise ValueError("threshold k must be positive")
    err = np.abs(_masked_errors(pred, gt))
    return float(100.0 * np.mean(err > k))


def rmse_depth(pred_z: DisparityMap, gt_z: DisparityMap) -> float:
    """Root mean square depth error over pixels valid in both maps."""
    err = _masked_errors(pred_z, gt_z)
    return float(np.sqrt(np.mean(err * err)))


def absr_depth(pred_z: DisparityMap, gt_z: DisparityMap) -> float:
    """Mean absolute relative depth error |z - z*| / z*.

    Raises:
        ValueError: if any commonly valid ground-truth depth is nonpositive.
    """
    mask = _common_valid(pred_z, gt_z)
    if not mask.any():
        raise ValueError("no commonly valid pixels")
    gt_vals = gt_z.values[mask]
    if np.any(gt_vals <= 0.0):
        raise ValueError("ground-truth depth must be positive on valid pixels")
    return float(np.mean(np.abs(pred_z.values[mask] - gt_vals) / gt_vals))


def boundary_mask(gt: DisparityMap, threshold: float) -> np.ndarray:
    """Pixels whose disparity jumps to a 4-neighbor by more than ``threshold``.

    Only valid neighbors are compared; the raw mask is dilated by one pixel
    (cross-shaped) so both sides of an edge are covered.
    """
    if not threshold > 0.0:
        raise ValueError("boundary threshold must be positive")
    vals, valid = gt.values, gt.valid
    jump = np.zeros(vals.shape, dtype=bool)
    for du, dv in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        shifted = np.roll(vals, (du, dv), axis=(0, 1))
        shifted_ok = np.roll(valid, (du, dv), axis=(0, 1)).copy()
        # np.roll wraps around; sever the wrapped edge.
        if du == 1:
            shifted_ok[0, :] = False
        elif du == -1:
            shifted_ok[-1, :] = False
        if dv == 1:
            shifted_ok[:, 0] = False
        elif dv == -1:
            shifted_ok[:, -1] = False
        jump |= valid & shifted_ok & (np.abs(vals - shifted) > threshold)
    dilated = jump.copy()
    for du, dv in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        rolled = np.roll(jump, (du, dv), axis=(0, 1))
        if du == 1:
            rolled[0, :] = False
        elif du == -1:
            rolled[-1, :] = False
        if dv == 1:
            rolled[:, 0] = False
        elif dv == -1:
            rolled[:, -1] = False
        dilated |= rolled
    return dilated


@dataclass(frozen=True)
class MetricValues:
    """One set of metric values; depth fields are None without a camera rig."""

    epe: float
    pe: dict[float, float]
    rmse: float | None
    absr: float | None


@dataclass(frozen=True)
class EvalReport:
    """Overall metrics, pixel counts, and optional boundary-restricted copies."""

    epe: float
    pe: dict[float, float]
    rmse: float | None
    absr: float | None
    total_pixels: int
    valid_pixels: int
    boundary_pixels: int
    boundary: MetricValues | None


def _depth_maps(pred: DisparityMap, gt: DisparityMap, rig: CameraRig):
    """Convert disparity maps to depth maps; nonpositive disparities drop out."""
    ok = pred.valid & gt.valid & (pred.values > 0.0) & (gt.values > 0.0)
    fb = rig.focal_length * rig.baseline
    with np.errstate(divide="ignore"):
        pred_z = np.where(ok, fb / np.where(ok, pred.values, 1.0), 0.0)
        gt_z = np.where(ok, fb / np.where(ok, gt.values, 1.0), 0.0)
    return DisparityMap(pred_z, ok), DisparityMap(gt_z, ok)


def _metric_set(pred, gt, ks, rig, extra_mask=None) -> MetricValues:
    err = np.abs(_masked_errors(pred, gt, extra_mask))
    pe = {float(k): float(100.0 * np.mean(err > k)) for k in ks}
    rmse = absr = None
    if rig is not None:
        pred_z, gt_z = _depth_maps(pred, gt, rig)
        if extra_mask is not None:
            pred_z = DisparityMap(pred_z.values, pred_z.valid & extra_mask)
            gt_z = DisparityMap(gt_z.values, gt_z.valid & extra_mask)
        rmse = rmse_depth(pred_z, gt_z)
        absr = absr_depth(pred_z, gt_z)
    return MetricValues(float(np.mean(err)), pe, rmse, absr)


def evaluate(pred: DisparityMap, gt: DisparityMap, rig: CameraRig | None = None,
             boundary_threshold: float | None = None,
             pe_thresholds=DEFAULT_PE_THRESHOLDS) -> EvalReport:
    """Full evaluation report; pure function of its inputs.

    Depth metrics are included when a rig is given (disparities are converted
    through Z = f*b/D; pixels with nonpositive disparity are excluded).
    Boundary-restricted copies are included when a boundary threshold is
    given, computed over the boundary mask intersected with validity.
    """
    overall = _metric_set(pred, gt, pe_thresholds, rig)
    common = _common_valid(pred, gt)
    boundary = None
    n_boundary = 0
    if boundary_threshold is not None:
        bmask = boundary_mask(gt, boundary_threshold)
        n_boundary = int(np.sum(bmask & common))
        boundary = _metric_set(pred, gt, pe_thresholds, rig, bmask)
    return EvalReport(
        epe=overall.epe,
        pe=overall.pe,
        rmse=overall.rmse,
        absr=overall.absr,
        total_pixels=int(gt.values.size),
        valid_pixels=int(common.sum()),
        boundary_pixels=n_boundary,
        boundary=boundary,
    )
