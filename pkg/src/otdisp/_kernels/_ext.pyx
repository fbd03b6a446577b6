# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: Dirac/mixture Wasserstein losses and SAD block matching.

Semantics mirror ``otdisp._kernels.fallback`` exactly; see that module for
the gradient conventions. The per-pixel inner loops here fuse the softmax,
loss, and gradient passes that the NumPy path spreads over temporaries.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, floor, log, sqrt

cnp.import_array()

SIGN_TOL = 1e-12

cdef double _SIGN_TOL = 1e-12


cdef inline double _sign_snapped(double v) noexcept nogil:
    if v > _SIGN_TOL:
        return 1.0
    if v < -_SIGN_TOL:
        return -1.0
    return 0.0


cdef inline double _clamp(double v, double lo, double hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef inline void _softmax_row(const double[:, ::1] costs, Py_ssize_t row,
                              double tau, double[::1] prob) noexcept nogil:
    cdef Py_ssize_t n = costs.shape[1]
    cdef Py_ssize_t i
    cdef double zmax = -costs[row, 0] / tau
    cdef double z, total = 0.0
    for i in range(1, n):
        z = -costs[row, i] / tau
        if z > zmax:
            zmax = z
    for i in range(n):
        prob[i] = exp(-costs[row, i] / tau - zmax)
        total += prob[i]
    for i in range(n):
        prob[i] /= total


def dirac_loss_batch(const double[:, ::1] costs, const double[:, ::1] raw_offsets,
                     const double[::1] bin_values, double bin_size, double tau,
                     const double[::1] targets, int p):
    """Wasserstein loss (p=1 or squared p=2) against one Dirac per pixel."""
    cdef Py_ssize_t n_pix = costs.shape[0]
    cdef Py_ssize_t n_bin = costs.shape[1]
    if p != 1 and p != 2:
        raise ValueError(f"unsupported transport order p={p!r} (use 1 or 2)")

    values = np.empty(n_pix, dtype=np.float64)
    d_costs = np.empty((n_pix, n_bin), dtype=np.float64)
    d_offs = np.empty((n_pix, n_bin), dtype=np.float64)
    cdef double[::1] val_v = values
    cdef double[:, ::1] dc_v = d_costs
    cdef double[:, ::1] do_v = d_offs
    prob_arr = np.empty(n_bin, dtype=np.float64)
    cdef double[::1] prob = prob_arr

    cdef Py_ssize_t row, i
    cdef double off, diff, phi, value, t
    with nogil:
        for row in range(n_pix):
            _softmax_row(costs, row, tau, prob)
            t = targets[row]
            value = 0.0
            for i in range(n_bin):
                off = _clamp(raw_offsets[row, i], 0.0, bin_size)
                diff = bin_values[i] + off - t
                if p == 1:
                    phi = fabs(diff)
                    do_v[row, i] = prob[i] * (1.0 if diff > 0.0 else (-1.0 if diff < 0.0 else 0.0))
                else:
                    phi = diff * diff
                    do_v[row, i] = 2.0 * prob[i] * diff
                if not (0.0 < raw_offsets[row, i] < bin_size):
                    do_v[row, i] = 0.0
                dc_v[row, i] = phi
                value += prob[i] * phi
            val_v[row] = value
            for i in range(n_bin):
                dc_v[row, i] = -(prob[i] / tau) * (dc_v[row, i] - value)
    return values, d_costs, d_offs


def mm_w1_loss_batch(const double[:, ::1] costs, const double[:, ::1] raw_offsets,
                     const double[::1] bin_values, double bin_size, double tau,
                     const double[:, ::1] target_locs, const double[:, ::1] target_weights,
                     const cnp.int64_t[::1] target_counts):
    """W1 loss against a padded Dirac-mixture target per pixel.

    Prediction atoms (bin value + clipped offset) are nondecreasing by
    construction and target atoms are sorted; the merged CDF walk is a plain
    two-pointer pass per pixel.
    """
    cdef Py_ssize_t n_pix = costs.shape[0]
    cdef Py_ssize_t n_bin = costs.shape[1]
    cdef Py_ssize_t m_max = target_locs.shape[1]
    cdef Py_ssize_t n_all = n_bin + m_max

    values = np.empty(n_pix, dtype=np.float64)
    d_costs = np.empty((n_pix, n_bin), dtype=np.float64)
    d_offs = np.empty((n_pix, n_bin), dtype=np.float64)
    cdef double[::1] val_v = values
    cdef double[:, ::1] dc_v = d_costs
    cdef double[:, ::1] do_v = d_offs

    prob_arr = np.empty(n_bin, dtype=np.float64)
    atom_arr = np.empty(n_bin, dtype=np.float64)
    flo_arr = np.empty(n_bin, dtype=np.float64)
    gex_arr = np.empty(n_bin, dtype=np.float64)
    gwt_arr = np.empty(n_bin, dtype=np.float64)
    pos_arr = np.empty(n_bin, dtype=np.intp)
    x_arr = np.empty(n_all, dtype=np.float64)
    f_arr = np.empty(n_all, dtype=np.float64)
    g_arr = np.empty(n_all, dtype=np.float64)
    s_arr = np.empty(n_all, dtype=np.float64)
    cdef double[::1] prob = prob_arr
    cdef double[::1] atom = atom_arr
    cdef double[::1] f_lo = flo_arr
    cdef double[::1] g_ex = gex_arr
    cdef double[::1] g_wt = gwt_arr
    cdef Py_ssize_t[::1] pos = pos_arr
    cdef double[::1] xs = x_arr
    cdef double[::1] cf = f_arr
    cdef double[::1] cg = g_arr
    cdef double[::1] sfx = s_arr

    cdef Py_ssize_t row, i, j, k, m, n_ev
    cdef double cum_f, cum_g, area, dx, gap, mean_gw, f_hi, g_in, d_loc
    with nogil:
        for row in range(n_pix):
            _softmax_row(costs, row, tau, prob)
            for i in range(n_bin):
                atom[i] = bin_values[i] + _clamp(raw_offsets[row, i], 0.0, bin_size)
            m = <Py_ssize_t>target_counts[row]

            # Merged event walk, prediction atoms first on ties.
            i = 0
            j = 0
            k = 0
            cum_f = 0.0
            cum_g = 0.0
            while i < n_bin or j < m:
                if i < n_bin and (j >= m or atom[i] <= target_locs[row, j]):
                    f_lo[i] = cum_f
                    g_ex[i] = cum_g
                    pos[i] = k
                    cum_f += prob[i]
                    xs[k] = atom[i]
                    i += 1
                else:
                    cum_g += target_weights[row, j]
                    xs[k] = target_locs[row, j]
                    j += 1
                cf[k] = cum_f
                cg[k] = cum_g
                k += 1
            n_ev = k

            area = 0.0
            sfx[n_ev - 1] = 0.0
            for k in range(n_ev - 2, -1, -1):
                dx = xs[k + 1] - xs[k]
                gap = cf[k] - cg[k]
                area += fabs(gap) * dx
                sfx[k] = sfx[k + 1] + _sign_snapped(gap) * dx
            val_v[row] = area

            mean_gw = 0.0
            for i in range(n_bin):
                g_wt[i] = sfx[pos[i]]
                mean_gw += prob[i] * g_wt[i]
            j = 0
            cum_g = 0.0
            for i in range(n_bin):
                while j < m and target_locs[row, j] <= atom[i]:
                    cum_g += target_weights[row, j]
                    j += 1
                g_in = cum_g
                f_hi = f_lo[i] + prob[i]
                d_loc = (_clamp(g_ex[i], f_lo[i], f_hi) + _clamp(g_in, f_lo[i], f_hi)
                         - f_lo[i] - f_hi)
                do_v[row, i] = d_loc if 0.0 < raw_offsets[row, i] < bin_size else 0.0
                dc_v[row, i] = -(prob[i] / tau) * (g_wt[i] - mean_gw)
    return values, d_costs, d_offs


def sad_cost_volume(const double[:, ::1] left, const double[:, ::1] right,
                    const double[::1] disparities, int window):
    """SAD matching costs; see the fallback docstring for the exact contract."""
    cdef Py_ssize_t h = left.shape[0]
    cdef Py_ssize_t w = left.shape[1]
    cdef Py_ssize_t n_disp = disparities.shape[0]
    cdef int r = window // 2
    cdef double n_win = <double>(window * window)

    costs = np.empty((h, w, n_disp), dtype=np.float64)
    cdef double[:, :, ::1] out = costs

    # Right image sampled at x - d, linear in the column; NaN marks samples
    # outside either image.
    samp_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] samp = samp_arr

    cdef Py_ssize_t b, y, x, yy, xx
    cdef double disp, xs, frac, diff, total, worst
    cdef Py_ssize_t base, n_valid
    cdef double nan = <double>np.nan
    with nogil:
        for b in range(n_disp):
            disp = disparities[b]
            for x in range(w):
                xs = x - disp
                if xs < 0.0 or xs > w - 1.0:
                    for y in range(h):
                        samp[y, x] = nan
                    continue
                base = <Py_ssize_t>floor(xs)
                if base > w - 2:
                    base = w - 2
                frac = xs - base
                for y in range(h):
                    samp[y, x] = right[y, base] * (1.0 - frac) + right[y, base + 1] * frac
            for y in range(h):
                for x in range(w):
                    total = 0.0
                    worst = -1.0
                    n_valid = 0
                    for yy in range(y - r, y + r + 1):
                        if yy < 0 or yy >= h:
                            continue
                        for xx in range(x - r, x + r + 1):
                            if xx < 0 or xx >= w:
                                continue
                            if samp[yy, xx] != samp[yy, xx]:
                                continue
                            diff = fabs(left[yy, xx] - samp[yy, xx])
                            total += diff
                            if diff > worst:
                                worst = diff
                            n_valid += 1
                    if n_valid == 0:
                        worst = 1.0
                    out[y, x, b] = (total + (n_win - n_valid) * worst) / n_win
    return costs
