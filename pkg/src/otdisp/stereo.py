"""Desk-scale stereo pipeline: synthetic scenes, block matching, fitting.

The pipeline stands in for a full learned stereo network at a size where
every quantity is exactly reproducible: a layered synthetic scene with
sub-pixel ground-truth disparity, a SAD cost volume over the bin grid, and a
small trainable head (shared linear offset predictor plus a softmax
temperature) optimized by deterministic full-batch gradient descent. The
cost volume is frozen during fitting; only the head parameters move.

Conventions: pixel (u, v) is (row, column); the left image at column v
matches the right image at column v - d for disparity d, so larger disparity
means nearer. Images are float arrays in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .distribution import GridSpec
from .groundtruth import DisparityMap, multimodal_target_field
from .losses import BATCH_LOSSES

__all__ = [
    "SceneObject",
    "TextureSpec",
    "SceneSpec",
    "CostVolume",
    "OffsetHead",
    "TrainerConfig",
    "FEATURE_RADIUS",
    "default_scene",
    "boundary_scene",
    "validate_scene",
    "synth_scene",
    "cost_volume_sad",
    "head_offsets",
    "fit",
    "predict",
    "run_pipeline",
    "PipelineResult",
]

# The offset head maps the cost of a bin and its +-2 neighbors along the bin
# axis to one raw offset; small enough that it cannot memorize pixels, big
# enough to learn sub-bin interpolation.
FEATURE_RADIUS = 2
FEATURE_LEN = 2 * FEATURE_RADIUS + 1

READOUTS = ("mean-grid", "mode-offset", "mean-offset")


@dataclass(frozen=True)
class SceneObject:
    """Axis-aligned rectangle or ellipse at constant disparity.

    ``position`` is the (row, col) center and ``size`` the full
    (height, width) extent, both in pixels of the left image.
    """

    shape: str
    position: tuple[float, float]
    size: tuple[float, float]
    disparity: float

    def __post_init__(self):
        if self.shape not in ("rectangle", "ellipse"):
            raise ValueError(f"unknown object shape {self.shape!r}")
        if not (self.size[0] > 0 and self.size[1] > 0):
            raise ValueError("object size must be positive")
        if not (np.isfinite(self.disparity) and self.disparity >= 0.0):
            raise ValueError("object disparity must be finite and nonnegative")

    def contains(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Membership test, evaluable at fractional coordinates."""
        dr = (rows - self.position[0]) / (self.size[0] / 2.0)
        dc = (cols - self.position[1]) / (self.size[1] / 2.0)
        if self.shape == "rectangle":
            return (np.abs(dr) <= 1.0) & (np.abs(dc) <= 1.0)
        return dr * dr + dc * dc <= 1.0


@dataclass(frozen=True)
class TextureSpec:
    """Additive Gaussian texture: unit-variance noise scaled by amplitude,
    box-smoothed with the given radius."""

    noise_amplitude: float = 0.25
    smoothing_radius: int = 2

    def __post_init__(self):
        if self.noise_amplitude < 0.0 or self.smoothing_radius < 0:
            raise ValueError("texture parameters must be nonnegative")


@dataclass(frozen=True)
class SceneSpec:
    """Layered synthetic scene: textured background plane plus objects."""

    width: int
    height: int
    background_disparity: float
    objects: tuple[SceneObject, ...]
    texture: TextureSpec = field(default_factory=TextureSpec)
    seed: int = 0

    def __post_init__(self):
        if self.width < 4 or self.height < 4:
            raise ValueError("scene must be at least 4 x 4 pixels")
        if not (np.isfinite(self.background_disparity) and self.background_disparity >= 0.0):
            raise ValueError("background disparity must be finite and nonnegative")
        object.__setattr__(self, "objects", tuple(self.objects))


def default_scene(seed: int = 7) -> SceneSpec:
    """128 x 96 scene with one rectangle and one ellipse over the background."""
    return SceneSpec(
        width=128,
        height=96,
        background_disparity=2.5,
        objects=(
            SceneObject("rectangle", position=(34.0, 38.0), size=(36.0, 44.0), disparity=10.5),
            SceneObject("ellipse", position=(66.0, 92.0), size=(40.0, 48.0), disparity=6.75),
        ),
        texture=TextureSpec(noise_amplitude=0.25, smoothing_radius=2),
        seed=seed,
    )


def boundary_scene(seed: int = 11) -> SceneSpec:
    """Boundary-heavy variant: several thin objects, high perimeter fraction."""
    return SceneSpec(
        width=128,
        height=96,
        background_disparity=2.5,
        objects=(
            SceneObject("rectangle", position=(20.0, 30.0), size=(14.0, 52.0), disparity=10.5),
            SceneObject("rectangle", position=(48.0, 76.0), size=(12.0, 64.0), disparity=8.75),
            SceneObject("ellipse", position=(74.0, 40.0), size=(16.0, 44.0), disparity=12.25),
            SceneObject("ellipse", position=(84.0, 96.0), size=(12.0, 40.0), disparity=6.75),
        ),
        texture=TextureSpec(noise_amplitude=0.25, smoothing_radius=2),
        seed=seed,
    )


def validate_scene(spec: SceneSpec, grid: GridSpec):
    """Check every disparity against the grid range and bimodality margin.

    Object disparities must differ from the background by at least two bin
    sizes so that boundary pixels produce genuinely bimodal cost columns.

    Raises:
        ValueError: on any violation.
    """
    lo, hi = grid.span()
    for d in (spec.background_disparity, *(o.disparity for o in spec.objects)):
        if not (lo <= d <= hi):
            raise ValueError(f"scene disparity {d} outside grid range [{lo}, {hi}]")
    for obj in spec.objects:
        if abs(obj.disparity - spec.background_disparity) < 2.0 * grid.bin_size:
            raise ValueError(
                f"object disparity {obj.disparity} must differ from the background "
                f"{spec.background_disparity} by at least 2 bin sizes"
            )


def _box_smooth(img: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return img
    size = 2 * radius + 1
    kernel = np.full(size, 1.0 / size)
    padded = np.pad(img, radius, mode="edge")
    out = np.apply_along_axis(lambda r: np.convolve(r, kernel, mode="valid"), 1, padded)
    out = np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="valid"), 0, out)
    return out


def _lerp_rows(texture: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample each texture row at (possibly fractional) column positions."""
    base = np.clip(np.floor(cols).astype(np.int64), 0, texture.shape[1] - 2)
    frac = cols - base
    return texture[:, base] * (1.0 - frac)[None, :] + texture[:, base + 1] * frac[None, :]


def synth_scene(spec: SceneSpec, grid: GridSpec | None = None):
    """Render a rectified stereo pair with sub-pixel ground-truth disparity.

    Each layer (background plus objects) gets its own textured plane; the
    left image composes the layers nearest-last, and the right image samples
    each layer's texture at column + disparity with linear interpolation.
    Left pixels whose match in the right image is covered by a nearer layer,
    or falls left of the image, are marked invalid in the ground truth.

    Returns:
        (left, right, gt) with float images in [0, 1] and a
        :class:`DisparityMap` ground truth. Deterministic given the seed.
    """
    if grid is not None:
        validate_scene(spec, grid)
    h, w = spec.height, spec.width
    max_disp = max([spec.background_disparity, *(o.disparity for o in spec.objects)])
    tex_w = w + math.ceil(max_disp) + 2
    rng = np.random.default_rng(spec.seed)

    # Nearest (largest disparity) layers paint last; ties keep listed order.
    layers = [(spec.background_disparity, None)]
    layers += [(obj.disparity, obj) for obj in spec.objects]
    layer_order = sorted(range(len(layers)), key=lambda i: (layers[i][0], i))

    textures = []
    for _ in layers:
        level = rng.uniform(0.3, 0.7)
        noise = rng.standard_normal((h, tex_w))
        noise = _box_smooth(noise, spec.texture.smoothing_radius)
        std = noise.std()
        if std > 0:
            noise = noise / std
        textures.append(np.clip(level + spec.texture.noise_amplitude * noise, 0.02, 0.98))

    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]

    left = np.empty((h, w))
    right = np.empty((h, w))
    gt_vals = np.empty((h, w))
    layer_id = np.empty((h, w), dtype=np.int64)
    for idx in layer_order:
        disp, obj = layers[idx]
        mask_l = np.ones((h, w), dtype=bool) if obj is None else obj.contains(rows, cols)
        left[mask_l] = textures[idx][:, :w][mask_l]
        gt_vals[mask_l] = disp
        layer_id[mask_l] = idx
        # A right pixel at column x shows the layer point at left column x + d.
        src_cols = cols[0] + disp
        mask_r = np.ones((h, w), dtype=bool) if obj is None else obj.contains(rows, src_cols[None, :])
        sampled = _lerp_rows(textures[idx], src_cols)
        right[mask_r] = sampled[mask_r]

    valid = cols - gt_vals >= 0.0
    for idx in layer_order:
        disp, _ = layers[idx]
        mine = layer_id == idx
        if not mine.any():
            continue
        for jdx in layer_order:
            d_near, obj_near = layers[jdx]
            if d_near <= disp or obj_near is None:
                continue
            # Nearer layer covering this pixel's match point occludes it.
            covered = obj_near.contains(rows, cols + (d_near - disp))
            valid &= ~(mine & covered)
    return left, right, DisparityMap(gt_vals, valid)


@dataclass(frozen=True)
class CostVolume:
    """H x W x B matching costs, lower is better."""

    costs: np.ndarray

    def __post_init__(self):
        costs = np.ascontiguousarray(self.costs, dtype=np.float64)
        if costs.ndim != 3:
            raise ValueError("cost volume must have shape (H, W, B)")
        if not np.all(np.isfinite(costs)):
            raise ValueError("cost volume entries must be finite")
        object.__setattr__(self, "costs", costs)

    @property
    def height(self) -> int:
        return self.costs.shape[0]

    @property
    def width(self) -> int:
        return self.costs.shape[1]

    @property
    def bins(self) -> int:
        return self.costs.shape[2]


def cost_volume_sad(left: np.ndarray, right: np.ndarray, grid: GridSpec,
                    window: int = 5) -> CostVolume:
    """Block-matching costs over the grid's disparity values.

    ``costs[u, v, i]`` is the windowed mean absolute difference between the
    left image at (u, v) and the right image at (u, v - value(i)); samples
    outside either image take the worst valid difference of their window.

    Raises:
        ValueError: for an even or nonpositive window, mismatched image
            shapes, or images smaller than the window.
    """
    left = np.ascontiguousarray(left, dtype=np.float64)
    right = np.ascontiguousarray(right, dtype=np.float64)
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window {window} must be an odd positive integer")
    if left.shape != right.shape or left.ndim != 2:
        raise ValueError("left and right must be equal-shape 2D images")
    if min(left.shape) < window:
        raise ValueError("images are smaller than the matching window")
    return CostVolume(_kernels.sad_cost_volume(left, right, grid.values(), window))


@dataclass(frozen=True)
class OffsetHead:
    """Trainable readout head: linear offset predictor plus softmax scale.

    ``weights`` maps the 5 cost values around a bin to one raw offset (pre
    clip); the temperature is optimized as log(tau) so it stays positive.
    ``enabled`` distinguishes the no-offset ablation arm, whose offsets are
    identically zero.
    """

    weights: np.ndarray
    bias: float
    log_tau: float
    enabled: bool = True

    def __post_init__(self):
        wts = np.asarray(self.weights, dtype=np.float64)
        if wts.shape != (FEATURE_LEN,) or not np.all(np.isfinite(wts)):
            raise ValueError(f"head weights must be {FEATURE_LEN} finite reals")
        if not (np.isfinite(self.bias) and np.isfinite(self.log_tau)):
            raise ValueError("head bias and log_tau must be finite")
        object.__setattr__(self, "weights", wts)

    @property
    def tau(self) -> float:
        return float(np.exp(self.log_tau))

    @staticmethod
    def initial(grid: GridSpec, enabled: bool = True) -> "OffsetHead":
        """Documented initialization: zero weights, centered bias s/2, tau 1."""
        return OffsetHead(np.zeros(FEATURE_LEN), grid.bin_size / 2.0, 0.0, enabled)


def _bin_features(costs: np.ndarray) -> list[np.ndarray]:
    """Contrast-normalized cost window per bin (edge-clamped neighbors).

    Each bin's feature vector is the cost of the bin and its +-2 neighbors
    divided by the window mean. SAD costs scale with local texture contrast;
    dividing it out lets one shared linear map read the sub-bin position
    from the window's asymmetry regardless of texture strength.
    """
    b = costs.shape[-1]
    idx = np.arange(b)
    window = [costs[..., np.clip(idx + f, 0, b - 1)] for f in range(-FEATURE_RADIUS, FEATURE_RADIUS + 1)]
    norm = sum(window) / FEATURE_LEN + 1e-12
    return [w / norm for w in window]


def head_offsets(head: OffsetHead, costs: np.ndarray) -> np.ndarray:
    """Raw (pre-clip) offsets predicted from the local cost window."""
    if not head.enabled:
        return np.zeros_like(costs)
    out = np.full_like(costs, head.bias)
    for w_f, feat in zip(head.weights, _bin_features(costs)):
        out += w_f * feat
    return out


@dataclass(frozen=True)
class TrainerConfig:
    """Deterministic full-batch gradient descent settings.

    ``sample`` caps the number of training pixels; when set, the subset is
    drawn without replacement by a generator seeded with ``seed`` and kept in
    row-major order, so runs remain bitwise reproducible.
    """

    steps: int = 2000
    step_size: float = 0.05
    seed: int = 0
    sample: int | None = None

    def __post_init__(self):
        if self.steps < 0 or self.step_size <= 0.0:
            raise ValueError("trainer needs steps >= 0 and a positive step size")


def fit(cv: CostVolume, gt: DisparityMap, grid: GridSpec, loss: str = "w1",
        mm: bool = False, mm_k: int = 3, mm_alpha: float = 0.8,
        trainer: TrainerConfig | None = None, offsets_enabled: bool = True):
    """Fit the offset head by gradient descent on the chosen batch loss.

    Trains (weights, bias, log tau) on all gt-valid pixels of the frozen
    cost volume; with ``mm`` the targets are the multi-modal patch mixtures
    and the loss must be ``"w1"``. Returns the fitted head and the per-step
    loss trace (the loss evaluated before each update).

    Raises:
        ValueError: on shape mismatch, an unknown loss, an mm request with a
            non-w1 loss, or when no pixel is valid.
    """
    trainer = trainer or TrainerConfig()
    if loss not in BATCH_LOSSES:
        raise ValueError(f"unknown loss {loss!r}; expected one of {BATCH_LOSSES}")
    if mm and loss != "w1":
        raise ValueError("multi-modal targets require the w1 loss")
    if (cv.height, cv.width) != (gt.height, gt.width):
        raise ValueError("cost volume and ground truth shapes disagree")
    if cv.bins != grid.count:
        raise ValueError("cost volume depth does not match the grid")
    if not gt.valid.any():
        raise ValueError("no valid training pixels")

    flat_valid = gt.valid.reshape(-1)
    rows = np.flatnonzero(flat_valid)
    if trainer.sample is not None and trainer.sample < rows.size:
        rng = np.random.default_rng(trainer.seed)
        rows = np.sort(rng.choice(rows, size=trainer.sample, replace=False))
    costs = cv.costs.reshape(-1, cv.bins)[rows]
    n_pix = rows.size

    targets_mix = None
    if mm:
        mix_field = multimodal_target_field(gt, mm_k, mm_alpha)
        flat_loc = mix_field.locations.reshape(-1, mix_field.locations.shape[-1])
        flat_wts = mix_field.weights.reshape(-1, flat_loc.shape[-1])
        flat_cnt = mix_field.counts.reshape(-1)
        targets_mix = (
            np.ascontiguousarray(flat_loc[rows]),
            np.ascontiguousarray(flat_wts[rows]),
            np.ascontiguousarray(flat_cnt[rows], dtype=np.int64),
        )
    targets = np.ascontiguousarray(gt.values.reshape(-1)[rows])

    feats = [np.ascontiguousarray(f) for f in _bin_features(costs)]
    bins = grid.values()
    weights = np.zeros(FEATURE_LEN)
    bias = grid.bin_size / 2.0
    log_tau = 0.0
    trace = np.empty(trainer.steps)

    for step in range(trainer.steps):
        tau = float(np.exp(log_tau))
        if offsets_enabled:
            raw = bias + sum(w_f * f for w_f, f in zip(weights, feats))
        else:
            raw = np.zeros_like(costs)
        if targets_mix is not None:
            values, d_costs, d_offs = _kernels.mm_w1_loss_batch(
                costs, raw, bins, grid.bin_size, tau, *targets_mix)
        elif loss in ("w1", "w2sq"):
            values, d_costs, d_offs = _kernels.dirac_loss_batch(
                costs, raw, bins, grid.bin_size, tau, targets, 1 if loss == "w1" else 2)
        elif loss in ("kl-laplace", "kl-gaussian"):
            values, d_costs, d_offs, _ = _kernels.kl_loss_batch(
                costs, raw, bins, grid.bin_size, tau, targets,
                loss.removeprefix("kl-"), 1.0, True, grid.origin)
        else:
            values, d_costs, d_offs = _kernels.smooth_l1_mean_batch(
                costs, raw, bins, grid.bin_size, tau, targets,
                shifted=(loss == "smooth-l1-shifted"))
        trace[step] = values.sum() / n_pix

        g_log_tau = -float(np.sum(d_costs * costs)) / n_pix
        log_tau -= trainer.step_size * g_log_tau
        if offsets_enabled:
            for f in range(FEATURE_LEN):
                weights[f] -= trainer.step_size * float(np.sum(d_offs * feats[f])) / n_pix
            bias -= trainer.step_size * float(d_offs.sum()) / n_pix

    return OffsetHead(weights, float(bias), float(log_tau), offsets_enabled), trace


def predict(cv: CostVolume, head: OffsetHead, grid: GridSpec, readout: str) -> DisparityMap:
    """Per-pixel disparity readout from the cost volume under a fitted head.

    ``mean-grid`` is the probability-weighted mean over unshifted bin values,
    ``mode-offset`` the most probable shifted atom, and ``mean-offset`` the
    mean of the shifted atoms (used by the offsets-with-regression ablation
    arm). Every output pixel is marked valid.
    """
    if readout not in READOUTS:
        raise ValueError(f"unknown readout {readout!r}; expected one of {READOUTS}")
    if cv.bins != grid.count:
        raise ValueError("cost volume depth does not match the grid")
    flat = cv.costs.reshape(-1, cv.bins)
    raw = head_offsets(head, flat)
    z = -flat / head.tau
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    bins = grid.values()
    if readout == "mean-grid":
        vals = probs @ bins
    elif readout == "mean-offset":
        vals = np.sum(probs * (bins[None, :] + np.clip(raw, 0.0, grid.bin_size)), axis=1)
    else:
        best = np.argmax(probs, axis=1)
        picked = np.take_along_axis(raw, best[:, None], axis=1)[:, 0]
        vals = bins[best] + np.clip(picked, 0.0, grid.bin_size)
    shape = (cv.height, cv.width)
    return DisparityMap(vals.reshape(shape), np.ones(shape, dtype=bool))


@dataclass(frozen=True)
class PipelineResult:
    """Everything produced by one synth -> match -> fit -> predict run."""

    left: np.ndarray
    right: np.ndarray
    gt: DisparityMap
    cost_volume: CostVolume
    head: OffsetHead
    trace: np.ndarray
    prediction: DisparityMap


def run_pipeline(scene: SceneSpec, grid: GridSpec, *, loss: str = "w1",
                 readout: str = "mode-offset", mm: bool = False, mm_k: int = 3,
                 mm_alpha: float = 0.8, trainer: TrainerConfig | None = None,
                 offsets_enabled: bool = True, window: int = 5) -> PipelineResult:
    """End-to-end deterministic run of the desk-scale pipeline."""
    left, right, gt = synth_scene(scene, grid)
    cv = cost_volume_sad(left, right, grid, window)
    head, trace = fit(cv, gt, grid, loss, mm, mm_k, mm_alpha, trainer, offsets_enabled)
    pred = predict(cv, head, grid, readout)
    return PipelineResult(left, right, gt, cv, head, trace, pred)
