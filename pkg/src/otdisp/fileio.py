"""Bit-exact file formats: PFM and PGM codecs, scene specs, reports.

PFM (grayscale "Pf") carries disparity maps: three text header lines (magic,
"width height", scale whose sign encodes endianness), then raw 32-bit float
rows stored bottom row first. Writes always emit little-endian (scale -1.0)
and round trips are bitwise identities on the samples. Disparity-map
validity rides the common convention that sample values <= 0 mean "no
ground truth"; a genuinely zero disparity therefore does not survive a file
round trip, which is why synthetic scenes keep disparities positive.

PGM is the binary "P5" variant with maxval 255. Scene specs and evaluation
reports are strict JSON: unknown keys are rejected and errors name the
offending JSON path.
"""

from __future__ import annotations

import json

import numpy as np

from .groundtruth import DisparityMap
from .metrics import EvalReport, MetricValues
from .stereo import SceneObject, SceneSpec, TextureSpec

__all__ = [
    "FormatError",
    "PfmImage",
    "read_pfm",
    "write_pfm",
    "read_pgm",
    "write_pgm",
    "disparity_map_to_pfm",
    "pfm_to_disparity_map",
    "image_to_pgm_bytes",
    "pgm_bytes_to_image",
    "load_scene_spec",
    "dump_scene_spec",
    "dump_report",
    "load_report",
]


class FormatError(ValueError):
    """Malformed or truncated file content."""


class PfmImage:
    """Grayscale PFM payload: (H, W) float32 samples, top row first in memory."""

    def __init__(self, samples: np.ndarray, scale: float = -1.0):
        samples = np.asarray(samples, dtype=np.float32)
        if samples.ndim != 2 or samples.size == 0:
            raise ValueError("PFM samples must form a nonempty 2D array")
        if scale == 0.0:
            raise ValueError("PFM scale must be nonzero")
        self.samples = samples
        self.scale = float(scale)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]


def _split_header(data: bytes, n_lines: int):
    lines = []
    pos = 0
    for _ in range(n_lines):
        end = data.find(b"\n", pos)
        if end < 0:
            raise FormatError("truncated header")
        lines.append(data[pos:end])
        pos = end + 1
    return lines, pos


def read_pfm(data: bytes) -> PfmImage:
    """Parse PFM bytes; errors name the malformed field.

    Raises:
        FormatError: bad magic ("PF" color is unsupported), malformed
            dimensions, zero scale, or a payload whose size does not match
            the declared dimensions.
    """
    (magic, dims, scale_line), pos = _split_header(data, 3)
    if magic != b"Pf":
        raise FormatError(f"unsupported PFM magic {magic!r} (only grayscale 'Pf')")
    parts = dims.split()
    if len(parts) != 2:
        raise FormatError(f"malformed PFM dimensions line {dims!r}")
    try:
        width, height = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise FormatError(f"malformed PFM dimensions line {dims!r}") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"nonpositive PFM dimensions {width} x {height}")
    try:
        scale = float(scale_line)
    except ValueError as exc:
        raise FormatError(f"malformed PFM scale line {scale_line!r}") from exc
    if scale == 0.0:
        raise FormatError("PFM scale must be nonzero")
    payload = data[pos:]
    expected = 4 * width * height
    if len(payload) != expected:
        raise FormatError(f"PFM payload holds {len(payload)} bytes, expected {expected}")
    dtype = "<f4" if scale < 0 else ">f4"
    rows = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    samples = rows[::-1].astype(np.float32)  # bottom row first on disk
    return PfmImage(samples, scale)


def write_pfm(img: PfmImage) -> bytes:
    """Serialize as little-endian PFM (scale -1.0), bottom row first.

    Raises:
        ValueError: on non-finite samples.
    """
    if not np.all(np.isfinite(img.samples)):
        raise ValueError("PFM samples must be finite")
    header = f"Pf\n{img.width} {img.height}\n-1.0\n".encode("ascii")
    return header + img.samples[::-1].astype("<f4").tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    """Parse binary PGM (P5, maxval 255) into a (H, W) uint8 array.

    Raises:
        FormatError: non-P5 magic, maxval other than 255, malformed header,
            or payload size mismatch.
    """
    (magic, dims, maxval), pos = _split_header(data, 3)
    if magic != b"P5":
        raise FormatError(f"unsupported PGM magic {magic!r}")
    parts = dims.split()
    if len(parts) != 2:
        raise FormatError(f"malformed PGM dimensions line {dims!r}")
    try:
        width, height = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise FormatError(f"malformed PGM dimensions line {dims!r}") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"nonpositive PGM dimensions {width} x {height}")
    if maxval.strip() != b"255":
        raise FormatError(f"unsupported PGM maxval {maxval!r} (must be 255)")
    payload = data[pos:]
    if len(payload) != width * height:
        raise FormatError(f"PGM payload holds {len(payload)} bytes, expected {width * height}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(img: np.ndarray) -> bytes:
    """Serialize a (H, W) uint8 array as binary PGM."""
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8 or img.size == 0:
        raise ValueError("PGM image must be a nonempty 2D uint8 array")
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    return header + img.tobytes()


def disparity_map_to_pfm(dmap: DisparityMap) -> PfmImage:
    """Encode validity by writing 0 at invalid pixels (values <= 0 = invalid)."""
    samples = np.where(dmap.valid, dmap.values, 0.0).astype(np.float32)
    return PfmImage(samples)


def pfm_to_disparity_map(img: PfmImage) -> DisparityMap:
    """Decode the values-<=-0-means-invalid convention."""
    vals = img.samples.astype(np.float64)
    valid = vals > 0.0
    return DisparityMap(np.where(valid, vals, 0.0), valid)


def image_to_pgm_bytes(img: np.ndarray) -> bytes:
    """Quantize a float image in [0, 1] to 8 bits and serialize as PGM."""
    q = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    return write_pgm(q)


def pgm_bytes_to_image(data: bytes) -> np.ndarray:
    """Read a PGM into a float image in [0, 1]."""
    return read_pgm(data).astype(np.float64) / 255.0


# --- strict JSON helpers -----------------------------------------------------


def _expect_object(node, path, keys):
    if not isinstance(node, dict):
        raise ValueError(f"{path}: expected an object")
    unknown = set(node) - set(keys)
    if unknown:
        raise ValueError(f"{path}: unknown field {sorted(unknown)[0]!r}")


def _get(node, key, kinds, path, kind_name):
    if key not in node:
        raise ValueError(f"{path}.{key}: missing field")
    value = node[key]
    if not isinstance(value, kinds) or isinstance(value, bool):
        raise ValueError(f"{path}.{key}: expected {kind_name}")
    return value


def _get_number(node, key, path) -> float:
    return float(_get(node, key, (int, float), path, "a number"))


def _get_int(node, key, path) -> int:
    value = _get(node, key, (int, float), path, "an integer")
    if float(value) != int(value):
        raise ValueError(f"{path}.{key}: expected an integer")
    return int(value)


def _get_pair(node, key, path) -> tuple[float, float]:
    value = _get(node, key, list, path, "a [a, b] pair")
    if len(value) != 2 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
        raise ValueError(f"{path}.{key}: expected a pair of numbers")
    return (float(value[0]), float(value[1]))


def load_scene_spec(data: bytes | str) -> SceneSpec:
    """Parse a scene-spec JSON document, rejecting unknown fields.

    Raises:
        ValueError: naming the JSON path of any missing, unknown, or
            mistyped field.
    """
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON: {exc}") from exc
    _expect_object(doc, "$", {"width", "height", "background_disparity", "objects", "texture", "seed"})
    objects = []
    raw_objects = _get(doc, "objects", list, "$", "an array")
    for i, raw in enumerate(raw_objects):
        path = f"$.objects[{i}]"
        _expect_object(raw, path, {"shape", "position", "size", "disparity"})
        shape = _get(raw, "shape", str, path, "a string")
        try:
            objects.append(SceneObject(
                shape=shape,
                position=_get_pair(raw, "position", path),
                size=_get_pair(raw, "size", path),
                disparity=_get_number(raw, "disparity", path),
            ))
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from exc
    raw_tex = _get(doc, "texture", dict, "$", "an object")
    _expect_object(raw_tex, "$.texture", {"noise_amplitude", "smoothing_radius"})
    texture = TextureSpec(
        noise_amplitude=_get_number(raw_tex, "noise_amplitude", "$.texture"),
        smoothing_radius=_get_int(raw_tex, "smoothing_radius", "$.texture"),
    )
    try:
        return SceneSpec(
            width=_get_int(doc, "width", "$"),
            height=_get_int(doc, "height", "$"),
            background_disparity=_get_number(doc, "background_disparity", "$"),
            objects=tuple(objects),
            texture=texture,
            seed=_get_int(doc, "seed", "$"),
        )
    except ValueError as exc:
        raise ValueError(f"$: {exc}") from exc


def dump_scene_spec(spec: SceneSpec) -> bytes:
    """Serialize a scene spec to the JSON layout load_scene_spec accepts."""
    doc = {
        "width": spec.width,
        "height": spec.height,
        "background_disparity": spec.background_disparity,
        "objects": [
            {
                "shape": o.shape,
                "position": list(o.position),
                "size": list(o.size),
                "disparity": o.disparity,
            }
            for o in spec.objects
        ],
        "texture": {
            "noise_amplitude": spec.texture.noise_amplitude,
            "smoothing_radius": spec.texture.smoothing_radius,
        },
        "seed": spec.seed,
    }
    return (json.dumps(doc, indent=2) + "\n").encode("ascii")


def _pe_key(k: float) -> str:
    return str(int(k)) if float(k) == int(k) else repr(float(k))


def _metric_doc(m: MetricValues) -> dict:
    return {
        "epe": m.epe,
        "pe": {_pe_key(k): v for k, v in m.pe.items()},
        "rmse": m.rmse,
        "absr": m.absr,
    }


def _metric_from_doc(doc, path) -> MetricValues:
    _expect_object(doc, path, {"epe", "pe", "rmse", "absr"})
    raw_pe = _get(doc, "pe", dict, path, "an object")
    pe = {}
    for key, value in raw_pe.items():
        try:
            k = float(key)
        except ValueError as exc:
            raise ValueError(f"{path}.pe: non-numeric threshold {key!r}") from exc
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ValueError(f"{path}.pe.{key}: expected a number")
        pe[k] = float(value)
    def opt(key):
        if key not in doc:
            raise ValueError(f"{path}.{key}: missing field")
        return None if doc[key] is None else float(_get(doc, key, (int, float), path, "a number"))
    return MetricValues(epe=_get_number(doc, "epe", path), pe=pe, rmse=opt("rmse"), absr=opt("absr"))


def dump_report(report: EvalReport) -> bytes:
    """Serialize an evaluation report as JSON."""
    doc = _metric_doc(MetricValues(report.epe, report.pe, report.rmse, report.absr))
    doc["counts"] = {
        "total": report.total_pixels,
        "valid": report.valid_pixels,
        "boundary": report.boundary_pixels,
    }
    doc["boundary"] = None if report.boundary is None else _metric_doc(report.boundary)
    return (json.dumps(doc, indent=2) + "\n").encode("ascii")


def load_report(data: bytes | str) -> EvalReport:
    """Parse a report produced by :func:`dump_report`."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON: {exc}") from exc
    _expect_object(doc, "$", {"epe", "pe", "rmse", "absr", "counts", "boundary"})
    top = _metric_from_doc({k: doc.get(k) for k in ("epe", "pe", "rmse", "absr")}, "$")
    counts = _get(doc, "counts", dict, "$", "an object")
    _expect_object(counts, "$.counts", {"total", "valid", "boundary"})
    if "boundary" not in doc:
        raise ValueError("$.boundary: missing field")
    boundary = None if doc["boundary"] is None else _metric_from_doc(doc["boundary"], "$.boundary")
    return EvalReport(
        epe=top.epe,
        pe=top.pe,
        rmse=top.rmse,
        absr=top.absr,
        total_pixels=_get_int(counts, "total", "$.counts"),
        valid_pixels=_get_int(counts, "valid", "$.counts"),
        boundary_pixels=_get_int(counts, "boundary", "$.counts"),
        boundary=boundary,
    )
