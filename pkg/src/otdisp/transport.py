"""Exact 1D optimal transport between finite Dirac mixtures.

A :class:`DiracMixture` is a finite discrete probability measure on the real
line: strictly increasing support locations with positive weights summing to
one. For such measures the Wasserstein-p distance has two equivalent closed
forms, both computed here exactly (up to floating point rounding):

* the quantile form, integrating ``|A^-1(q) - B^-1(q)|^p`` over the merged
  cumulative-weight partition of [0, 1] (:func:`wp_general`), and
* for p = 1, the CDF-area form, integrating ``|A(x) - B(x)|`` over the merged
  support grid (:func:`w1_cdf_area`).

Both run in O(B log B) for B total atoms; the log factor is the sort of the
merged partition. :func:`oracle_wp_naive` is a deliberately independent
O(B^2) reference used by the self-check suites: it enumerates all pairwise
overlaps of the two cumulative-weight partitions and shares no code with the
fast paths.

All operations are pure functions of immutable values and are safe to call
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DiracMixture",
    "StepCdf",
    "make_mixture",
    "cdf",
    "quantile",
    "wp_to_dirac",
    "wp_general",
    "w1_cdf_area",
    "oracle_wp_naive",
]

# Supports closer than this are considered coincident and fused at
# construction; keeps supports strictly increasing so CDFs are unambiguous.
MERGE_TOL = 1e-12

# Weight sums may drift by accumulated rounding (e.g. softmax outputs);
# anything beyond this is treated as an invalid distribution.
WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class DiracMixture:
    """Finite discrete probability measure on the real line.

    Invariants (checked at construction): ``supports`` strictly increasing,
    ``weights`` positive with the same length, and the weights sum to 1
    within ``WEIGHT_SUM_TOL``. Use :func:`make_mixture` to canonicalize raw
    atom lists (merge duplicates, drop zero weights, renormalize).
    """

    supports: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        sup = np.asarray(self.supports, dtype=np.float64)
        wts = np.asarray(self.weights, dtype=np.float64)
        if sup.ndim != 1 or wts.ndim != 1 or sup.size != wts.size or sup.size == 0:
            raise ValueError("mixture needs equally sized, nonempty supports and weights")
        if not (np.all(np.isfinite(sup)) and np.all(np.isfinite(wts))):
            raise ValueError("mixture supports and weights must be finite")
        if np.any(wts <= 0.0):
            raise ValueError("mixture weights must be positive")
        if np.any(np.diff(sup) <= 0.0):
            raise ValueError("mixture supports must be strictly increasing")
        if abs(float(wts.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"mixture weights sum to {wts.sum()!r}, expected 1")
        sup.flags.writeable = False
        wts.flags.writeable = False
        object.__setattr__(self, "supports", sup)
        object.__setattr__(self, "weights", wts)

    def __len__(self) -> int:
        return int(self.supports.size)


@dataclass(frozen=True)
class StepCdf:
    """Right-continuous step CDF of a Dirac mixture."""

    breakpoints: np.ndarray
    cumulative: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=np.float64)
        cm = np.asarray(self.cumulative, dtype=np.float64)
        if bp.ndim != 1 or cm.ndim != 1 or bp.size != cm.size or bp.size == 0:
            raise ValueError("step CDF needs equally sized, nonempty arrays")
        if np.any(np.diff(bp) <= 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(np.diff(cm) < 0.0):
            raise ValueError("cumulative values must be nondecreasing")
        if abs(float(cm[-1]) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("cumulative values must end at 1")
        bp.flags.writeable = False
        cm.flags.writeable = False
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "cumulative", cm)

    def evaluate(self, x) -> np.ndarray | float:
        """CDF value at ``x``: total weight of supports <= x (right-continuous)."""
        x_arr = np.asarray(x, dtype=np.float64)
        idx = np.searchsorted(self.breakpoints, x_arr, side="right")
        out = np.where(idx > 0, self.cumulative[np.maximum(idx - 1, 0)], 0.0)
        return float(out) if np.isscalar(x) or x_arr.ndim == 0 else out


def make_mixture(locations, weights) -> DiracMixture:
    """Canonicalize raw atoms into a valid :class:`DiracMixture`.

    Zero-weight atoms are dropped, locations closer than ``MERGE_TOL`` are
    fused (weights summed, the smallest location of the run kept), and the
    weights are renormalized to sum exactly to 1.

    Raises:
        ValueError: on empty input, negative or non-finite weights, or when
            all weights are zero.
    """
    loc = np.asarray(locations, dtype=np.float64)
    wts = np.asarray(weights, dtype=np.float64)
    if loc.ndim != 1 or wts.ndim != 1 or loc.size != wts.size or loc.size == 0:
        raise ValueError("locations and weights must be equally sized and nonempty")
    if not (np.all(np.isfinite(loc)) and np.all(np.isfinite(wts))):
        raise ValueError("locations and weights must be finite")
    if np.any(wts < 0.0):
        raise ValueError("weights must be nonnegative")
    keep = wts > 0.0
    loc, wts = loc[keep], wts[keep]
    if loc.size == 0:
        raise ValueError("at least one weight must be positive")

    order = np.argsort(loc, kind="stable")
    loc, wts = loc[order], wts[order]
    # Fuse runs of near-coincident locations (gap to the previous atom
    # <= MERGE_TOL); each run keeps its first, i.e. smallest, location.
    new_group = np.empty(loc.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(loc) > MERGE_TOL
    group = np.cumsum(new_group) - 1
    merged_loc = loc[new_group]
    merged_wts = np.zeros(merged_loc.size, dtype=np.float64)
    np.add.at(merged_wts, group, wts)
    merged_wts /= merged_wts.sum()
    return DiracMixture(merged_loc, merged_wts)


def cdf(mix: DiracMixture) -> StepCdf:
    """Step CDF of a mixture; the last cumulative value is forced to exactly 1."""
    cum = np.cumsum(mix.weights)
    cum[-1] = 1.0
    return StepCdf(mix.supports.copy(), cum)


def quantile(mix: DiracMixture, q: float) -> float:
    """Generalized inverse CDF: smallest support x with CDF(x) >= q.

    ``quantile(mix, 0)`` is the smallest support by convention.

    Raises:
        ValueError: if q is outside [0, 1].
    """
    q = float(q)
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"quantile level {q!r} outside [0, 1]")
    cum = np.cumsum(mix.weights)
    cum[-1] = 1.0
    idx = int(np.searchsorted(cum, q, side="left"))
    return float(mix.supports[min(idx, len(mix) - 1)])


def wp_to_dirac(mix: DiracMixture, target: float, p: float) -> float:
    """Wasserstein-p distance from a mixture to a single Dirac at ``target``.

    Every atom must travel to the target, so the coupling is forced and the
    distance collapses to ``(sum_i w_i |x_i - target|^p)^(1/p)``.
    """
    target = float(target)
    if not np.isfinite(target):
        raise ValueError("target must be finite")
    _check_order(p)
    moved = np.abs(mix.supports - target)
    if p == 1.0:
        return float(np.dot(mix.weights, moved))
    return float(np.dot(mix.weights, moved**p) ** (1.0 / p))


def wp_general(a: DiracMixture, b: DiracMixture, p: float) -> float:
    """Wasserstein-p distance between two mixtures via the quantile form.

    Merges the cumulative-weight partitions of [0, 1] induced by the two
    mixtures; on each merged segment both quantile functions are constant,
    so the integral is an exact finite sum. O(B log B) for B total atoms.
    """
    _check_order(p)
    cum_a = np.cumsum(a.weights)
    cum_b = np.cumsum(b.weights)
    cum_a[-1] = 1.0
    cum_b[-1] = 1.0
    levels = np.sort(np.concatenate((cum_a, cum_b)), kind="stable")
    lengths = np.diff(levels, prepend=0.0)
    ia = np.minimum(np.searchsorted(cum_a, levels, side="left"), len(a) - 1)
    ib = np.minimum(np.searchsorted(cum_b, levels, side="left"), len(b) - 1)
    gaps = np.abs(a.supports[ia] - b.supports[ib])
    if p == 1.0:
        return float(np.dot(lengths, gaps))
    if p == 2.0:
        return float(np.sqrt(np.dot(lengths, gaps * gaps)))
    return float(np.dot(lengths, gaps**p) ** (1.0 / p))


def w1_cdf_area(a: DiracMixture, b: DiracMixture) -> float:
    """W1 distance as the area between the two step CDFs.

    Sorts the union of supports and accumulates ``|A(x) - B(x)|`` times the
    gap between consecutive values; equals ``wp_general(a, b, 1)``.
    """
    values = np.concatenate((a.supports, b.supports))
    order = np.argsort(values, kind="stable")
    values = values[order]
    deltas = np.diff(values)
    # CDFs of both measures just right of each merged value.
    step_a = np.concatenate((a.weights, np.zeros(len(b))))[order]
    step_b = np.concatenate((np.zeros(len(a)), b.weights))[order]
    cdf_a = np.cumsum(step_a)[:-1]
    cdf_b = np.cumsum(step_b)[:-1]
    return float(np.dot(np.abs(cdf_a - cdf_b), deltas))


def oracle_wp_naive(a: DiracMixture, b: DiracMixture, p: float) -> float:
    """Quadratic reference for :func:`wp_general`; test/self-check use only.

    Enumerates every pair (i, j) of atoms and intersects their cumulative
    weight intervals directly, with no merged sort. O(B^2).
    """
    _check_order(p)
    lo_a = np.concatenate(([0.0], np.cumsum(a.weights)[:-1]))
    lo_b = np.concatenate(([0.0], np.cumsum(b.weights)[:-1]))
    hi_a = np.cumsum(a.weights)
    hi_b = np.cumsum(b.weights)
    hi_a[-1] = 1.0
    hi_b[-1] = 1.0
    total = 0.0
    for i in range(len(a)):
        for j in range(len(b)):
            overlap = min(hi_a[i], hi_b[j]) - max(lo_a[i], lo_b[j])
            if overlap > 0.0:
                total += overlap * abs(a.supports[i] - b.supports[j]) ** p
    return float(total ** (1.0 / p))


def _check_order(p: float):
    if not np.isfinite(p) or p < 1.0:
        raise ValueError(f"transport order p={p!r} must be a finite real >= 1")
