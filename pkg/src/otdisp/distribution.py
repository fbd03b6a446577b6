"""Per-pixel output representation: bin grid, logits, offsets, readouts.

A prediction at one pixel is a vector of matching costs over a uniform bin
grid plus one raw offset per bin. Softmax of the negated, temperature-scaled
costs gives bin probabilities; adding the clipped offsets to the bin values
turns the categorical distribution into a mixture of Diracs at arbitrary
sub-bin locations. The two readout rules compared throughout the package are
the probability-weighted mean over the unshifted grid (the classic baseline)
and the mode of the shifted mixture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transport import DiracMixture, make_mixture

__all__ = [
    "GridSpec",
    "PixelDistribution",
    "CameraRig",
    "default_disparity_grid",
    "default_depth_grid",
    "probabilities",
    "clipped_offsets",
    "to_mixture",
    "mean_readout_grid",
    "mode_readout",
    "disparity_to_depth",
    "depth_to_disparity",
]

DISPARITY_PIXELS = "disparity-pixels"
DEPTH_METERS = "depth-meters"


@dataclass(frozen=True)
class GridSpec:
    """Uniform bin grid. Bin i covers [origin + i*s, origin + (i+1)*s).

    The bin value is the left edge of its cell; offsets in [0, bin_size]
    therefore tile the full range without gaps.
    """

    origin: float
    bin_size: float
    count: int
    domain_kind: str = DISPARITY_PIXELS

    def __post_init__(self):
        if not (np.isfinite(self.origin) and np.isfinite(self.bin_size)):
            raise ValueError("grid origin and bin size must be finite")
        if self.bin_size <= 0.0:
            raise ValueError("grid bin size must be positive")
        if self.count < 2:
            raise ValueError("grid needs at least 2 bins")
        if self.domain_kind not in (DISPARITY_PIXELS, DEPTH_METERS):
            raise ValueError(f"unknown domain kind {self.domain_kind!r}")

    def values(self) -> np.ndarray:
        """Bin values origin + i*s for i in [0, count)."""
        return self.origin + self.bin_size * np.arange(self.count, dtype=np.float64)

    def span(self) -> tuple[float, float]:
        """Closed range [origin, origin + count*s] covered by shifted atoms."""
        return (self.origin, self.origin + self.count * self.bin_size)


def default_disparity_grid() -> GridSpec:
    """96 bins of size 2 px covering disparities [0, 191]."""
    return GridSpec(origin=0.0, bin_size=2.0, count=96, domain_kind=DISPARITY_PIXELS)


def default_depth_grid() -> GridSpec:
    """80 bins of size 1 m covering depths [0 m, 80 m]."""
    return GridSpec(origin=0.0, bin_size=1.0, count=80, domain_kind=DEPTH_METERS)


@dataclass(frozen=True)
class PixelDistribution:
    """Raw per-pixel prediction: costs and pre-clip offsets over the bins.

    Lower cost means a better match. Offsets are stored raw and clipped to
    [0, bin_size] wherever they are consumed; the clip subgradient is the
    identity strictly inside (0, bin_size) and zero outside.
    """

    costs: np.ndarray
    raw_offsets: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=np.float64)
        offs = np.asarray(self.raw_offsets, dtype=np.float64)
        if costs.ndim != 1 or offs.shape != costs.shape or costs.size < 2:
            raise ValueError("costs and raw_offsets must be equal-length vectors (>= 2 bins)")
        if not (np.isfinite(self.temperature) and self.temperature > 0.0):
            raise ValueError("temperature must be a positive real")
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "raw_offsets", offs)
        object.__setattr__(self, "temperature", float(self.temperature))


@dataclass(frozen=True)
class CameraRig:
    """Rectified stereo rig: focal length in pixels, baseline in meters."""

    focal_length: float
    baseline: float

    def __post_init__(self):
        if not (self.focal_length > 0.0 and self.baseline > 0.0):
            raise ValueError("focal length and baseline must be positive")


def probabilities(pd: PixelDistribution) -> np.ndarray:
    """Bin probabilities softmax(-costs / temperature), max-stabilized.

    Raises:
        ValueError: on non-finite costs.
    """
    if not np.all(np.isfinite(pd.costs)):
        raise ValueError("costs must be finite")
    z = -pd.costs / pd.temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def clipped_offsets(pd: PixelDistribution, grid: GridSpec) -> np.ndarray:
    """Effective offsets: raw offsets clipped to [0, bin_size]."""
    return np.clip(pd.raw_offsets, 0.0, grid.bin_size)


def to_mixture(pd: PixelDistribution, grid: GridSpec) -> DiracMixture:
    """Shifted Dirac mixture: atom at bin value + clipped offset, per bin."""
    if grid.count != pd.costs.size:
        raise ValueError("grid bin count does not match distribution size")
    return make_mixture(grid.values() + clipped_offsets(pd, grid), probabilities(pd))


def mean_readout_grid(pd: PixelDistribution, grid: GridSpec) -> float:
    """Probability-weighted mean over the unshifted bin values.

    This is the classic readout of softmax disparity networks; offsets are
    deliberately ignored.
    """
    if grid.count != pd.costs.size:
        raise ValueError("grid bin count does not match distribution size")
    return float(np.dot(probabilities(pd), grid.values()))


def mode_readout(pd: PixelDistribution, grid: GridSpec) -> float:
    """Location of the most probable shifted atom.

    Argmax over bin probabilities (ties break to the smallest bin index),
    then bin value plus clipped offset.
    """
    if grid.count != pd.costs.size:
        raise ValueError("grid bin count does not match distribution size")
    probs = probabilities(pd)
    i = int(np.argmax(probs))
    return float(grid.origin + i * grid.bin_size + np.clip(pd.raw_offsets[i], 0.0, grid.bin_size))


def disparity_to_depth(d: float, rig: CameraRig) -> float:
    """Depth Z = f*b / D for disparity D > 0."""
    if not d > 0.0:
        raise ValueError("disparity must be positive to convert to depth")
    return rig.focal_length * rig.baseline / float(d)


def depth_to_disparity(z: float, rig: CameraRig) -> float:
    """Disparity D = f*b / Z for depth Z > 0."""
    if not z > 0.0:
        raise ValueError("depth must be positive to convert to disparity")
    return rig.focal_length * rig.baseline / float(z)
