"""Training objectives over (costs, raw offsets) with analytic gradients.

Every loss returns a :class:`LossGrad` holding the scalar value together
with the partial derivatives w.r.t. the per-bin costs and raw offsets. The
cost gradient is taken through ``softmax(-costs / tau)`` with tau held
fixed; because tau enters only through that softmax, the temperature
gradient of any loss here is recoverable as
``d/d log(tau) = -sum(d_costs * costs)`` (see :func:`grad_log_temperature`).
Offset gradients carry the clip subgradient: identity strictly inside
(0, bin_size), zero outside. Subgradient 0 is chosen at every
non-differentiable locus (absolute-value kinks, CDF atom crossings).

The Wasserstein losses realize the joint objective whose single backward
pass trains bin probabilities and offsets together; the approximate KL
losses are the contrasting classification-plus-offset-regression
decomposition, and the smooth-L1 losses are the mean-readout regression
baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .distribution import GridSpec, PixelDistribution
from .groundtruth import MixtureField
from .transport import DiracMixture

__all__ = [
    "LossGrad",
    "PixelField",
    "BATCH_LOSSES",
    "wp_loss_dirac",
    "w1_loss_mm",
    "smooth_l1_regression",
    "smooth_l1_mean_loss",
    "smooth_l1_shifted_mean_loss",
    "kl_laplace_loss",
    "kl_gaussian_loss",
    "grad_log_temperature",
    "batch_loss",
]

# Loss choices accepted by batch_loss / the training loop. "smooth-l1-shifted"
# regresses the mean of the shifted atoms; it exists so the offsets-with-
# regression ablation arm has a gradient path to the offsets.
BATCH_LOSSES = ("w1", "w2sq", "kl-laplace", "kl-gaussian", "smooth-l1", "smooth-l1-shifted")


@dataclass(frozen=True)
class LossGrad:
    """Loss value with analytic gradients w.r.t. costs and raw offsets."""

    value: float
    d_costs: np.ndarray
    d_raw_offsets: np.ndarray


@dataclass(frozen=True)
class PixelField:
    """Dense per-pixel predictions: costs and raw offsets of shape (H, W, B).

    The temperature is shared across pixels; it is the single learnable
    softmax scale of the fitting head.
    """

    costs: np.ndarray
    raw_offsets: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        costs = np.ascontiguousarray(self.costs, dtype=np.float64)
        offs = np.ascontiguousarray(self.raw_offsets, dtype=np.float64)
        if costs.ndim != 3 or offs.shape != costs.shape:
            raise ValueError("field costs and raw_offsets must share shape (H, W, B)")
        if not (np.isfinite(self.temperature) and self.temperature > 0.0):
            raise ValueError("temperature must be a positive real")
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "raw_offsets", offs)
        object.__setattr__(self, "temperature", float(self.temperature))

    def pixel(self, u: int, v: int) -> PixelDistribution:
        """Single-pixel view at row u, column v."""
        return PixelDistribution(self.costs[u, v], self.raw_offsets[u, v], self.temperature)


def _check_pixel(pd: PixelDistribution, grid: GridSpec, target: float | None = None):
    if grid.count != pd.costs.size:
        raise ValueError("grid bin count does not match distribution size")
    if not np.all(np.isfinite(pd.costs)) or not np.all(np.isfinite(pd.raw_offsets)):
        raise ValueError("costs and raw offsets must be finite")
    if target is not None and not np.isfinite(target):
        raise ValueError("target must be finite")


def _rows(pd: PixelDistribution) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.ascontiguousarray(pd.costs[None, :], dtype=np.float64),
        np.ascontiguousarray(pd.raw_offsets[None, :], dtype=np.float64),
    )


def wp_loss_dirac(pd: PixelDistribution, grid: GridSpec, target: float, p: int = 1) -> LossGrad:
    """Wasserstein loss against a Dirac target: sum_i p_i |c_i - target|^p.

    ``c_i`` is bin value plus clipped offset. p=1 is the plain W1 distance;
    p=2 is the squared W2 (no outer root), matching how the squared
    distance is used as a training objective.
    """
    _check_pixel(pd, grid, target)
    costs, offs = _rows(pd)
    values, d_costs, d_offs = _kernels.dirac_loss_batch(
        costs, offs, grid.values(), grid.bin_size, pd.temperature,
        np.array([float(target)]), int(p),
    )
    return LossGrad(float(values[0]), d_costs[0], d_offs[0])


def w1_loss_mm(pd: PixelDistribution, grid: GridSpec, target: DiracMixture) -> LossGrad:
    """W1 loss against a general mixture target via the CDF-area form.

    Equals ``wp_loss_dirac(..., p=1)`` when the target has a single atom.
    """
    _check_pixel(pd, grid)
    costs, offs = _rows(pd)
    values, d_costs, d_offs = _kernels.mm_w1_loss_batch(
        costs, offs, grid.values(), grid.bin_size, pd.temperature,
        np.ascontiguousarray(target.supports[None, :]),
        np.ascontiguousarray(target.weights[None, :]),
        np.array([len(target)], dtype=np.int64),
    )
    return LossGrad(float(values[0]), d_costs[0], d_offs[0])


def smooth_l1_regression(pred: float, target: float) -> tuple[float, float]:
    """Smooth-L1 with transition point 1; returns (value, d/d pred)."""
    err = float(pred) - float(target)
    if abs(err) < 1.0:
        return 0.5 * err * err, err
    return abs(err) - 0.5, float(np.sign(err))


def smooth_l1_mean_loss(pd: PixelDistribution, grid: GridSpec, target: float) -> LossGrad:
    """Smooth-L1 on the mean-over-grid readout, chained through the softmax.

    This composition is the classic regression baseline; offsets receive no
    gradient because the unshifted mean ignores them.
    """
    _check_pixel(pd, grid, target)
    costs, offs = _rows(pd)
    values, d_costs, d_offs = _kernels.smooth_l1_mean_batch(
        costs, offs, grid.values(), grid.bin_size, pd.temperature,
        np.array([float(target)]), shifted=False,
    )
    return LossGrad(float(values[0]), d_costs[0], d_offs[0])


def smooth_l1_shifted_mean_loss(pd: PixelDistribution, grid: GridSpec, target: float) -> LossGrad:
    """Smooth-L1 on the mean of the shifted atoms (offsets-with-regression arm)."""
    _check_pixel(pd, grid, target)
    costs, offs = _rows(pd)
    values, d_costs, d_offs = _kernels.smooth_l1_mean_batch(
        costs, offs, grid.values(), grid.bin_size, pd.temperature,
        np.array([float(target)]), shifted=True,
    )
    return LossGrad(float(values[0]), d_costs[0], d_offs[0])


def kl_laplace_loss(pd: PixelDistribution, grid: GridSpec, target: float,
                    smoothing: float = 1.0, exact: bool = True) -> LossGrad:
    """KL loss after Laplace-smoothing the predicted mixture.

    Exact mode evaluates ``-log sum_i p_i Laplace(c_i - target; smoothing)``
    by log-sum-exp. Approximate mode keeps only the bin whose cell contains
    the target (the one-hot reduction): ``-log p(bin)`` plus the scaled
    offset residual ``|target - c_bin| / smoothing`` plus the kernel's log
    normalizer ``log(2 * smoothing)``.

    Raises:
        ValueError: if the smoothing scale is not positive or the target lies
            outside the grid range.
    """
    return _kl_loss(pd, grid, target, "laplace", smoothing, exact)


def kl_gaussian_loss(pd: PixelDistribution, grid: GridSpec, target: float,
                     sigma: float = 1.0, exact: bool = True) -> LossGrad:
    """KL loss after Gaussian smoothing; quadratic analogue of the Laplace form."""
    return _kl_loss(pd, grid, target, "gaussian", sigma, exact)


def _kl_loss(pd, grid, target, kind, scale, exact) -> LossGrad:
    _check_pixel(pd, grid, target)
    if not (np.isfinite(scale) and scale > 0.0):
        raise ValueError("smoothing scale must be a positive real")
    costs, offs = _rows(pd)
    values, d_costs, d_offs, _ = _kernels.kl_loss_batch(
        costs, offs, grid.values(), grid.bin_size, pd.temperature,
        np.array([float(target)]), kind, float(scale), bool(exact), grid.origin,
    )
    return LossGrad(float(values[0]), d_costs[0], d_offs[0])


def grad_log_temperature(lg: LossGrad, costs: np.ndarray) -> float:
    """Temperature gradient d loss / d log(tau) recovered from the cost gradient.

    Valid because every loss in this module depends on tau only through
    ``softmax(-costs / tau)``.
    """
    return float(-np.sum(lg.d_costs * costs))


def batch_loss(field: PixelField, grid: GridSpec, targets, valid: np.ndarray,
               loss: str, *, kl_scale: float = 1.0):
    """Mean loss over valid pixels with full-frame gradient fields.

    ``targets`` is an (H, W) array of scalar targets, or a
    :class:`~otdisp.groundtruth.MixtureField` when ``loss == "w1"`` (the
    multi-modal variant). Invalid pixels contribute neither value nor
    gradient; the reduction runs in row-major order over the valid pixels so
    results are bitwise reproducible.

    Returns:
        (value, d_costs, d_raw_offsets) where the gradient arrays have the
        field's (H, W, B) shape and are already scaled by 1 / n_valid.

    Raises:
        ValueError: when no pixel is valid, shapes disagree, or the loss
            choice is unknown.
    """
    if loss not in BATCH_LOSSES:
        raise ValueError(f"unknown loss {loss!r}; expected one of {BATCH_LOSSES}")
    h, w, b = field.costs.shape
    if grid.count != b:
        raise ValueError("grid bin count does not match field depth")
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != (h, w):
        raise ValueError("valid mask shape does not match field")
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("no valid pixels to reduce over")

    costs = field.costs[valid]
    offs = field.raw_offsets[valid]
    bins = grid.values()
    tau = field.temperature

    mixture_target = isinstance(targets, MixtureField)
    if mixture_target:
        if loss != "w1":
            raise ValueError("mixture targets require the w1 loss")
        if targets.locations.shape[:2] != (h, w):
            raise ValueError("target field shape does not match prediction field")
        values, d_costs, d_offs = _kernels.mm_w1_loss_batch(
            costs, offs, bins, grid.bin_size, tau,
            np.ascontiguousarray(targets.locations[valid]),
            np.ascontiguousarray(targets.weights[valid]),
            np.ascontiguousarray(targets.counts[valid], dtype=np.int64),
        )
    else:
        tvals = np.asarray(targets, dtype=np.float64)
        if tvals.shape != (h, w):
            raise ValueError("target map shape does not match prediction field")
        tvals = np.ascontiguousarray(tvals[valid])
        if loss in ("w1", "w2sq"):
            values, d_costs, d_offs = _kernels.dirac_loss_batch(
                costs, offs, bins, grid.bin_size, tau, tvals, 1 if loss == "w1" else 2)
        elif loss in ("kl-laplace", "kl-gaussian"):
            values, d_costs, d_offs, _ = _kernels.kl_loss_batch(
                costs, offs, bins, grid.bin_size, tau, tvals,
                loss.removeprefix("kl-"), kl_scale, True, grid.origin)
        else:
            values, d_costs, d_offs = _kernels.smooth_l1_mean_batch(
                costs, offs, bins, grid.bin_size, tau, tvals,
                shifted=(loss == "smooth-l1-shifted"))

    mean_value = float(values.sum() / n_valid)
    grad_costs = np.zeros_like(field.costs)
    grad_offs = np.zeros_like(field.raw_offsets)
    grad_costs[valid] = d_costs / n_valid
    grad_offs[valid] = d_offs / n_valid
    return mean_value, grad_costs, grad_offs
