"""Vectorized NumPy implementations of the hot per-pixel kernels.

These are the reference semantics for the compiled extension and the import
fallback when it is unavailable. All loss kernels operate on flat pixel
batches: costs and raw offsets of shape (P, B), one target (or padded target
mixture) per pixel, and return per-pixel loss values plus unreduced gradient
arrays of the same shape. Gradient conventions shared by every kernel:

* ``d_costs`` is the partial derivative through the softmax
  ``p = softmax(-costs / tau)`` holding tau fixed; the temperature gradient
  follows as ``d log tau = -sum(d_costs * costs)``.
* ``d_offsets`` is the derivative w.r.t. the raw offsets, already masked by
  the clip subgradient: zero unless the raw offset lies strictly inside
  (0, bin_size).
* at non-differentiable loci (absolute-value kinks, CDF crossings) the
  subgradient 0 is chosen; CDF differences smaller than ``SIGN_TOL`` are
  treated as crossings so that accumulated rounding cannot flip a sign.
"""

from __future__ import annotations

import warnings

import numpy as np

__all__ = [
    "SIGN_TOL",
    "dirac_loss_batch",
    "mm_w1_loss_batch",
    "kl_loss_batch",
    "smooth_l1_mean_batch",
    "sad_cost_volume",
]

SIGN_TOL = 1e-12


def _softmax_neg(costs: np.ndarray, tau: float) -> np.ndarray:
    z = -costs / tau
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _shifted_atoms(raw_offsets: np.ndarray, bin_values: np.ndarray, bin_size: float) -> np.ndarray:
    return bin_values[None, :] + np.clip(raw_offsets, 0.0, bin_size)


def _clip_mask(raw_offsets: np.ndarray, bin_size: float) -> np.ndarray:
    return (raw_offsets > 0.0) & (raw_offsets < bin_size)


def dirac_loss_batch(costs, raw_offsets, bin_values, bin_size, tau, targets, p):
    """Wasserstein loss against one Dirac target per pixel.

    p = 1 gives W1; p = 2 gives the squared W2 (no outer root). Returns
    ``(values, d_costs, d_offsets)`` with shapes (P,), (P, B), (P, B).
    """
    probs = _softmax_neg(costs, tau)
    atoms = _shifted_atoms(raw_offsets, bin_values, bin_size)
    diff = atoms - targets[:, None]
    if p == 1:
        phi = np.abs(diff)
        d_off = probs * np.sign(diff)
    elif p == 2:
        phi = diff * diff
        d_off = 2.0 * probs * diff
    else:
        raise ValueError(f"unsupported transport order p={p!r} (use 1 or 2)")
    values = np.sum(probs * phi, axis=1)
    d_costs = -(probs / tau) * (phi - values[:, None])
    d_off = np.where(_clip_mask(raw_offsets, bin_size), d_off, 0.0)
    return values, d_costs, d_off


def _repair_target_padding(target_locs, target_weights, target_counts):
    """Replace pad entries by the row's last real atom with zero weight."""
    m_max = target_locs.shape[1]
    idx = np.arange(m_max)[None, :]
    real = idx < target_counts[:, None]
    last = np.take_along_axis(target_locs, target_counts[:, None] - 1, axis=1)
    locs = np.where(real, target_locs, last)
    wts = np.where(real, target_weights, 0.0)
    return locs, wts


def mm_w1_loss_batch(costs, raw_offsets, bin_values, bin_size, tau, target_locs,
                     target_weights, target_counts):
    """W1 loss against a general Dirac-mixture target per pixel.

    The value is the area between the two step CDFs, accumulated over the
    sorted union of atom locations. Gradients come from piecewise
    differentiation of the same area: the weight gradient of atom i is the
    signed area to its right, and the location gradient is the quantile-
    segment pairing written in closed CDF form. Targets are padded to a
    common width; ``target_counts`` gives the real atom count per row.
    """
    P, B = costs.shape
    probs = _softmax_neg(costs, tau)
    atoms = _shifted_atoms(raw_offsets, bin_values, bin_size)
    tlocs, twts = _repair_target_padding(
        np.asarray(target_locs, dtype=np.float64),
        np.asarray(target_weights, dtype=np.float64),
        np.asarray(target_counts),
    )
    m_max = tlocs.shape[1]
    n = B + m_max

    # Merged walk with prediction atoms sorted before coincident targets.
    all_locs = np.concatenate((atoms, tlocs), axis=1)
    order = np.argsort(all_locs, axis=1, kind="stable")
    x = np.take_along_axis(all_locs, order, axis=1)
    fw = np.take_along_axis(np.concatenate((probs, np.zeros_like(twts)), axis=1), order, axis=1)
    gw = np.take_along_axis(np.concatenate((np.zeros_like(probs), twts), axis=1), order, axis=1)
    cdf_f = np.cumsum(fw, axis=1)
    cdf_g = np.cumsum(gw, axis=1)

    dx = np.diff(x, axis=1)
    gap = cdf_f[:, :-1] - cdf_g[:, :-1]
    values = np.sum(np.abs(gap) * dx, axis=1)

    # Signed area to the right of each merged event; the weight gradient of a
    # prediction atom is this suffix at its own position.
    seg = np.where(np.abs(gap) <= SIGN_TOL, 0.0, np.sign(gap)) * dx
    suffix = np.zeros((P, n))
    suffix[:, :-1] = np.cumsum(seg[:, ::-1], axis=1)[:, ::-1]
    inv = np.empty_like(order)
    np.put_along_axis(inv, order, np.broadcast_to(np.arange(n), (P, n)).copy(), axis=1)
    pred_pos = inv[:, :B]
    g_weight = np.take_along_axis(suffix, pred_pos, axis=1)

    # Location gradient: with F-/F the prediction CDF just before/after atom
    # i and G evaluated just left of (excl) and at (incl) its location,
    #   d/dc_i = clamp(G_excl, F-, F) + clamp(G_incl, F-, F) - F- - F,
    # which pairs the atom's quantile span against the target quantiles with
    # sign(0) = 0 at exact coincidences.
    f_hi = np.take_along_axis(cdf_f, pred_pos, axis=1)
    f_lo = f_hi - probs
    g_excl = np.take_along_axis(cdf_g, pred_pos, axis=1)
    order2 = np.argsort(np.concatenate((tlocs, atoms), axis=1), axis=1, kind="stable")
    cdf_g2 = np.cumsum(
        np.take_along_axis(np.concatenate((twts, np.zeros_like(probs)), axis=1), order2, axis=1),
        axis=1,
    )
    inv2 = np.empty_like(order2)
    np.put_along_axis(inv2, order2, np.broadcast_to(np.arange(n), (P, n)).copy(), axis=1)
    g_incl = np.take_along_axis(cdf_g2, inv2[:, m_max:], axis=1)
    d_loc = np.clip(g_excl, f_lo, f_hi) + np.clip(g_incl, f_lo, f_hi) - f_lo - f_hi

    mean_gw = np.sum(probs * g_weight, axis=1, keepdims=True)
    d_costs = -(probs / tau) * (g_weight - mean_gw)
    d_off = np.where(_clip_mask(raw_offsets, bin_size), d_loc, 0.0)
    return values, d_costs, d_off


def kl_loss_batch(costs, raw_offsets, bin_values, bin_size, tau, targets,
                  kind, smoothing, exact, grid_origin):
    """KL-divergence loss after smoothing the prediction with a kernel.

    ``kind`` selects the Laplace (scale ``smoothing``) or Gaussian (sigma
    ``smoothing``) kernel. Exact mode evaluates the full negative
    log-likelihood of the target under the smoothed mixture; approximate mode
    keeps only the term of the bin containing the target (the one-hot
    reduction: classification plus offset regression plus the kernel's log
    normalizer).
    """
    P, B = costs.shape
    z = -costs / tau
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    log_p = z - log_norm
    probs = np.exp(log_p)
    atoms = _shifted_atoms(raw_offsets, bin_values, bin_size)
    diff = atoms - targets[:, None]
    if kind == "laplace":
        log_kernel = -np.log(2.0 * smoothing) - np.abs(diff) / smoothing
        d_atom_factor = np.sign(diff) / smoothing
        const = np.log(2.0 * smoothing)
    elif kind == "gaussian":
        log_kernel = -np.log(smoothing * np.sqrt(2.0 * np.pi)) - diff * diff / (2.0 * smoothing**2)
        d_atom_factor = diff / smoothing**2
        const = np.log(smoothing * np.sqrt(2.0 * np.pi))
    else:
        raise ValueError(f"unknown smoothing kernel {kind!r}")

    bin_idx = np.floor((targets - grid_origin) / bin_size).astype(np.int64)
    if np.any(bin_idx < 0) or np.any(bin_idx >= B):
        raise ValueError("target outside the grid range")

    if exact:
        a = log_p + log_kernel
        a_max = a.max(axis=1, keepdims=True)
        lse = a_max + np.log(np.sum(np.exp(a - a_max), axis=1, keepdims=True))
        values = -lse[:, 0]
        resp = np.exp(a - lse)
        d_costs = (resp - probs) / tau
        d_off = resp * d_atom_factor
    else:
        col = bin_idx[:, None]
        p_bin = np.take_along_axis(probs, col, axis=1)[:, 0]
        kern_bin = np.take_along_axis(log_kernel, col, axis=1)[:, 0]
        values = -np.log(p_bin) - kern_bin
        onehot = np.zeros((P, B))
        np.put_along_axis(onehot, col, 1.0, axis=1)
        d_costs = (onehot - probs) / tau
        d_off = onehot * d_atom_factor
    d_off = np.where(_clip_mask(raw_offsets, bin_size), d_off, 0.0)
    return values, d_costs, d_off, const


def smooth_l1_mean_batch(costs, raw_offsets, bin_values, bin_size, tau, targets, shifted):
    """Smooth-L1 regression on the probability-weighted mean readout.

    ``shifted=False`` uses the unshifted bin values (the classic baseline;
    offsets receive no gradient). ``shifted=True`` regresses the mean of the
    shifted atoms instead, which routes the same loss through the offsets.
    """
    probs = _softmax_neg(costs, tau)
    if shifted:
        vals = _shifted_atoms(raw_offsets, bin_values, bin_size)
    else:
        vals = np.broadcast_to(bin_values[None, :], probs.shape)
    mean = np.sum(probs * vals, axis=1)
    err = mean - targets
    small = np.abs(err) < 1.0
    values = np.where(small, 0.5 * err * err, np.abs(err) - 0.5)
    d_mean = np.where(small, err, np.sign(err))
    d_costs = d_mean[:, None] * (-(probs / tau) * (vals - mean[:, None]))
    if shifted:
        d_off = np.where(_clip_mask(raw_offsets, bin_size), d_mean[:, None] * probs, 0.0)
    else:
        d_off = np.zeros_like(d_costs)
    return values, d_costs, d_off


def sad_cost_volume(left, right, disparities, window):
    """Sum-of-absolute-differences matching costs over a disparity grid.

    ``costs[y, x, b]`` is the mean absolute intensity difference over a
    ``window x window`` patch between the left image at (y, x) and the right
    image at (y, x - disparities[b]), with the right image sampled linearly
    at fractional columns. Samples falling outside either image contribute
    the worst (largest) valid difference of their window; a window with no
    valid sample costs 1.0, the largest difference of unit-range images.
    """
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    h, w = left.shape
    r = window // 2
    n_win = window * window
    costs = np.empty((h, w, len(disparities)), dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    for b, disp in enumerate(disparities):
        xs = cols - disp
        valid = (xs >= 0.0) & (xs <= w - 1.0)
        base = np.clip(np.floor(xs).astype(np.int64), 0, w - 2)
        frac = xs - base
        sampled = right[:, base] * (1.0 - frac)[None, :] + right[:, base + 1] * frac[None, :]
        diff = np.abs(left - sampled)
        diff[:, ~valid] = np.nan
        padded = np.pad(diff, r, mode="constant", constant_values=np.nan)
        windows = np.lib.stride_tricks.sliding_window_view(padded, (window, window))
        n_valid = np.sum(~np.isnan(windows), axis=(2, 3))
        total = np.nansum(windows, axis=(2, 3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            worst = np.nanmax(windows, axis=(2, 3))
        worst = np.where(n_valid > 0, np.nan_to_num(worst, nan=1.0), 1.0)
        costs[:, :, b] = (total + (n_win - n_valid) * worst) / n_win
    return costs
