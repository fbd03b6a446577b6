"""Self-check suites: transport oracles, gradient checks, KL consistency.

These are the runtime counterparts of the test suite's numerical oracles,
packaged so a deployed build can re-verify itself (`otdisp check`). Each
suite returns its worst observed error and the tolerance it must stay
under. Loss functions are looked up on the losses module at call time so a
deliberately corrupted gradient (or a monkeypatched one, in tests) is
caught.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses as losses_mod
from . import transport as transport_mod
from .distribution import GridSpec, PixelDistribution, probabilities

__all__ = [
    "SuiteResult",
    "GRADIENT_SUITES",
    "transport_oracle_suite",
    "gradient_suite",
    "kl_consistency_suite",
    "run_all",
]

FD_STEP = 1e-6
KINK_MARGIN = 1e-3


@dataclass(frozen=True)
class SuiteResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def _random_mixture(rng, max_atoms=64, span=32.0):
    n = int(rng.integers(1, max_atoms + 1))
    locs = rng.uniform(0.0, span, size=n)
    wts = rng.uniform(0.05, 1.0, size=n)
    return transport_mod.make_mixture(locs, wts)


def transport_oracle_suite(n_pairs: int = 300, seed: int = 0, max_atoms: int = 64) -> SuiteResult:
    """Agreement of the three W1 paths and the p=2 oracle on random pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        a = _random_mixture(rng, max_atoms)
        b = _random_mixture(rng, max_atoms)
        w1 = transport_mod.wp_general(a, b, 1.0)
        worst = max(worst, abs(w1 - transport_mod.w1_cdf_area(a, b)))
        worst = max(worst, abs(w1 - transport_mod.oracle_wp_naive(a, b, 1.0)))
        w2 = transport_mod.wp_general(a, b, 2.0)
        worst = max(worst, abs(w2 - transport_mod.oracle_wp_naive(a, b, 2.0)))
        target = float(rng.uniform(0.0, 32.0))
        delta = transport_mod.make_mixture([target], [1.0])
        for p in (1.0, 2.0):
            worst = max(worst, abs(transport_mod.wp_to_dirac(a, target, p)
                                   - transport_mod.wp_general(a, delta, p)))
    return SuiteResult("transport-oracles", worst, 1e-12)


def _random_instance(rng):
    n_bins = int(rng.integers(6, 17))
    grid = GridSpec(origin=0.0, bin_size=2.0, count=n_bins)
    costs = rng.normal(0.0, 1.5, size=n_bins)
    offs = rng.uniform(0.05, grid.bin_size - 0.05, size=n_bins)
    tau = float(rng.uniform(0.5, 2.0))
    lo, hi = grid.span()
    target = float(rng.uniform(lo + 0.05, hi - 0.05))
    return grid, PixelDistribution(costs, offs, tau), target


def _mm_target(rng, grid):
    n = int(rng.integers(1, 6))
    lo, hi = grid.span()
    locs = rng.uniform(lo, hi, size=n)
    wts = rng.uniform(0.2, 1.0, size=n)
    return transport_mod.make_mixture(locs, wts)


def _loss_closure(name, grid, target):
    """(callable pd -> LossGrad, target atoms for kink exclusion)."""
    if name == "w1":
        return lambda pd: losses_mod.wp_loss_dirac(pd, grid, target, 1), np.array([target])
    if name == "w2sq":
        return lambda pd: losses_mod.wp_loss_dirac(pd, grid, target, 2), np.empty(0)
    if name == "w1-mm":
        return lambda pd: losses_mod.w1_loss_mm(pd, grid, target), target.supports
    if name == "kl-laplace":
        return lambda pd: losses_mod.kl_laplace_loss(pd, grid, target), np.array([target])
    if name == "kl-gaussian":
        return lambda pd: losses_mod.kl_gaussian_loss(pd, grid, target), np.empty(0)
    if name == "smooth-l1-mean":
        return lambda pd: losses_mod.smooth_l1_mean_loss(pd, grid, target), np.empty(0)
    raise ValueError(f"unknown gradient suite {name!r}")

GRADIENT_SUITES = ("w1", "w2sq", "w1-mm", "kl-laplace", "kl-gaussian", "smooth-l1-mean")
GRADIENT_TOLERANCES = {name: (1e-4 if name == "w1-mm" else 1e-5) for name in GRADIENT_SUITES}


def gradient_suite(name: str, n_instances: int = 60, seed: int = 0) -> SuiteResult:
    """Central finite differences against the analytic gradients of one loss.

    The relative error is |analytic - fd| / max(1, |fd|); coordinates within
    ``KINK_MARGIN`` of a non-differentiable locus (shifted atom meeting a
    target atom or another shifted atom, clip boundaries, the smooth-L1
    transition) are excluded, as is conventional for subgradient checks.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    h = FD_STEP
    for _ in range(n_instances):
        grid, pd, scalar_target = _random_instance(rng)
        target = _mm_target(rng, grid) if name == "w1-mm" else scalar_target
        fn, kink_atoms = _loss_closure(name, grid, target)
        if name == "smooth-l1-mean":
            # Stay off the |err| = 1 transition of the smooth-L1 itself.
            mean = float(np.dot(probabilities(pd), grid.values()))
            if abs(abs(mean - target) - 1.0) < KINK_MARGIN:
                continue
        atoms = grid.values() + np.clip(pd.raw_offsets, 0.0, grid.bin_size)
        ok_coord = np.ones(grid.count, dtype=bool)
        if kink_atoms.size:
            ok_coord &= np.abs(atoms[:, None] - kink_atoms[None, :]).min(axis=1) >= KINK_MARGIN
        if name == "w1-mm":
            gaps = np.abs(atoms[:, None] - atoms[None, :]) + np.eye(grid.count)
            ok_coord &= gaps.min(axis=1) >= KINK_MARGIN

        lg = fn(pd)
        for i in range(grid.count):
            step = np.zeros(grid.count)
            step[i] = h
            f_hi = fn(PixelDistribution(pd.costs + step, pd.raw_offsets, pd.temperature)).value
            f_lo = fn(PixelDistribution(pd.costs - step, pd.raw_offsets, pd.temperature)).value
            fd = (f_hi - f_lo) / (2 * h)
            worst = max(worst, abs(lg.d_costs[i] - fd) / max(1.0, abs(fd)))
            if not ok_coord[i]:
                continue
            f_hi = fn(PixelDistribution(pd.costs, pd.raw_offsets + step, pd.temperature)).value
            f_lo = fn(PixelDistribution(pd.costs, pd.raw_offsets - step, pd.temperature)).value
            fd = (f_hi - f_lo) / (2 * h)
            worst = max(worst, abs(lg.d_raw_offsets[i] - fd) / max(1.0, abs(fd)))
        log_tau = np.log(pd.temperature)
        f_hi = fn(PixelDistribution(pd.costs, pd.raw_offsets, float(np.exp(log_tau + h)))).value
        f_lo = fn(PixelDistribution(pd.costs, pd.raw_offsets, float(np.exp(log_tau - h)))).value
        fd = (f_hi - f_lo) / (2 * h)
        analytic = losses_mod.grad_log_temperature(lg, pd.costs)
        worst = max(worst, abs(analytic - fd) / max(1.0, abs(fd)))
    return SuiteResult(f"grad-{name}", worst, GRADIENT_TOLERANCES[name])


def kl_consistency_suite(n_instances: int = 100, seed: int = 0) -> SuiteResult:
    """Exact vs one-hot KL agreement when one bin dominates the probability.

    On instances where the target's bin holds >= 0.999 of the mass, the
    exact and approximate losses must agree within 1e-3 * (1 + exact), and
    the approximate value must decompose exactly into the classification
    term, the scaled offset residual, and the kernel's log normalizer.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        n_bins = int(rng.integers(6, 17))
        grid = GridSpec(origin=0.0, bin_size=2.0, count=n_bins)
        j = int(rng.integers(0, n_bins))
        costs = rng.uniform(12.0, 20.0, size=n_bins)
        costs[j] = 0.0
        offs = rng.uniform(0.05, grid.bin_size - 0.05, size=n_bins)
        pd = PixelDistribution(costs, offs, 1.0)
        target = grid.origin + j * grid.bin_size + float(rng.uniform(0.0, grid.bin_size))
        probs = probabilities(pd)
        if probs[j] < 0.999:
            continue
        for kind, fn, scale in (("laplace", losses_mod.kl_laplace_loss, 1.0),
                                ("gaussian", losses_mod.kl_gaussian_loss, 1.0)):
            exact = fn(pd, grid, target, scale, exact=True).value
            approx = fn(pd, grid, target, scale, exact=False).value
            worst = max(worst, abs(exact - approx) / (1.0 + exact))
            atom = grid.values()[j] + np.clip(pd.raw_offsets[j], 0.0, grid.bin_size)
            if kind == "laplace":
                recomposed = -np.log(probs[j]) + abs(target - atom) / scale + np.log(2.0 * scale)
            else:
                recomposed = (-np.log(probs[j]) + (target - atom) ** 2 / (2.0 * scale**2)
                              + np.log(scale * np.sqrt(2.0 * np.pi)))
            if abs(approx - recomposed) > 1e-9:
                worst = max(worst, 1.0)  # decomposition identity broken
    return SuiteResult("kl-exact-vs-approx", worst, 1e-3)


def run_all(seed: int = 0, n_pairs: int = 300, n_grad: int = 60) -> list[SuiteResult]:
    """Every suite, in a fixed order."""
    results = [transport_oracle_suite(n_pairs=n_pairs, seed=seed)]
    results += [gradient_suite(name, n_instances=n_grad, seed=seed) for name in GRADIENT_SUITES]
    results.append(kl_consistency_suite(seed=seed))
    return results
