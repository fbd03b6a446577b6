"""Ground-truth disparity maps and their uni-/multi-modal target mixtures.

A boundary pixel sits astride two surfaces, so its "true" disparity is
genuinely ambiguous. The multi-modal construction turns the k x k patch of
ground-truth disparities around a pixel into a mixture target: the center
value keeps weight alpha, every valid neighbor shares the remainder equally,
and missing neighbors (invalid or outside the image) are dropped with the
realized weights renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transport import DiracMixture, make_mixture

__all__ = [
    "DisparityMap",
    "MixtureField",
    "unimodal_target",
    "multimodal_target",
    "multimodal_target_field",
]


@dataclass(frozen=True)
class DisparityMap:
    """H x W real-valued map with a validity mask.

    Valid pixels hold finite nonnegative values (pixels or meters depending
    on the grid domain); invalid pixels are never read as data.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.valid, dtype=bool)
        if vals.ndim != 2 or mask.shape != vals.shape:
            raise ValueError("values and valid mask must share an (H, W) shape")
        if vals.size and not np.all(np.isfinite(vals[mask])):
            raise ValueError("valid pixels must hold finite values")
        if vals.size and np.any(vals[mask] < 0.0):
            raise ValueError("valid pixels must hold nonnegative values")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "valid", mask)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MixtureField:
    """Per-pixel mixture targets padded to a common atom count.

    ``counts[u, v]`` atoms of row (u, v) are real; pad slots repeat the last
    real location with zero weight. Pixels invalid in the source map carry a
    single dummy atom and must be masked out downstream.
    """

    locations: np.ndarray
    weights: np.ndarray
    counts: np.ndarray


def unimodal_target(dmap: DisparityMap, u: int, v: int) -> DiracMixture:
    """Dirac target at the ground-truth value of pixel (row u, column v).

    Raises:
        ValueError: if the pixel has no ground truth.
    """
    if not dmap.valid[u, v]:
        raise ValueError(f"pixel ({u}, {v}) has no ground truth")
    return DiracMixture(np.array([dmap.values[u, v]]), np.array([1.0]))


def multimodal_target(dmap: DisparityMap, u: int, v: int, k: int = 3,
                      alpha: float = 0.8) -> DiracMixture:
    """Mixture target from the k x k ground-truth patch centered at (u, v).

    The center contributes weight ``alpha`` and each of the other k*k - 1
    cells ``(1 - alpha) / (k*k - 1)``; cells that are invalid or fall outside
    the image are dropped and the remaining weights renormalized, so the
    center keeps its weight in proportion to the nominal total. Coincident
    disparities merge into single atoms.

    Raises:
        ValueError: on an invalid center pixel, or k even or < 1, or alpha
            outside (0, 1].
    """
    if k < 1 or k % 2 == 0:
        raise ValueError(f"patch size k={k} must be an odd positive integer")
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"center weight alpha={alpha} must lie in (0, 1]")
    if not dmap.valid[u, v]:
        raise ValueError(f"pixel ({u}, {v}) has no ground truth")
    if k == 1 or alpha == 1.0:
        return unimodal_target(dmap, u, v)

    r = k // 2
    locations = [dmap.values[u, v]]
    weights = [alpha]
    neighbor_weight = (1.0 - alpha) / (k * k - 1)
    for du in range(-r, r + 1):
        for dv in range(-r, r + 1):
            if du == 0 and dv == 0:
                continue
            uu, vv = u + du, v + dv
            if 0 <= uu < dmap.height and 0 <= vv < dmap.width and dmap.valid[uu, vv]:
                locations.append(dmap.values[uu, vv])
                weights.append(neighbor_weight)
    return make_mixture(locations, weights)


def multimodal_target_field(dmap: DisparityMap, k: int = 3, alpha: float = 0.8) -> MixtureField:
    """Multi-modal targets for every valid pixel, padded into dense arrays."""
    h, w = dmap.values.shape
    mixtures: dict[tuple[int, int], DiracMixture] = {}
    m_max = 1
    for u in range(h):
        for v in range(w):
            if dmap.valid[u, v]:
                mix = multimodal_target(dmap, u, v, k, alpha)
                mixtures[(u, v)] = mix
                m_max = max(m_max, len(mix))
    locations = np.zeros((h, w, m_max), dtype=np.float64)
    weights = np.zeros((h, w, m_max), dtype=np.float64)
    weights[:, :, 0] = 1.0
    counts = np.ones((h, w), dtype=np.int64)
    for (u, v), mix in mixtures.items():
        m = len(mix)
        locations[u, v, :m] = mix.supports
        locations[u, v, m:] = mix.supports[-1]
        weights[u, v, :m] = mix.weights
        weights[u, v, m:] = 0.0
        counts[u, v] = m
    return MixtureField(locations, weights, counts)
