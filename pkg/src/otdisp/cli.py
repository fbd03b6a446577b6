"""Command-line front end for the desk-scale pipeline.

Subcommands: ``synth`` renders a stereo pair with ground truth, ``fit``
trains the offset head and writes the model, loss trace, and prediction,
``eval`` scores a prediction against ground truth, ``check`` runs the
numerical self-check suites, and ``ablate`` reproduces the readout/loss and
bin-size ablation tables as CSV. Every subcommand is deterministic given its
seed flags.

Exit codes: 0 on success, 1 when a check suite fails, 2 on usage or input
errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import checks, fileio, metrics, stereo
from .distribution import CameraRig, GridSpec

__all__ = ["main", "build_parser"]


def _grid_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--grid-origin", type=float, default=0.0, help="first bin value")
    parser.add_argument("--bin-size", type=float, default=2.0, help="bin size s")
    parser.add_argument("--bins", type=int, default=96, help="number of bins")


def _grid_from(args) -> GridSpec:
    return GridSpec(args.grid_origin, args.bin_size, args.bins)


def _trainer_flags(parser: argparse.ArgumentParser, steps: int, sample: int | None):
    parser.add_argument("--steps", type=int, default=steps, help="gradient descent steps")
    parser.add_argument("--lr", type=float, default=0.05, help="gradient descent step size")
    parser.add_argument("--seed", type=int, default=0, help="seed for any randomized choice")
    parser.add_argument("--sample", type=int, default=sample,
                        help="cap on training pixels (seeded subsample; default all)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otdisp", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic stereo pair with ground truth")
    p.add_argument("--spec", type=Path, default=None,
                   help="scene spec JSON (default: the built-in default scene)")
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    _grid_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit the offset head on a rendered scene")
    p.add_argument("--left", type=Path, default=Path("left.pgm"))
    p.add_argument("--right", type=Path, default=Path("right.pgm"))
    p.add_argument("--gt", type=Path, default=Path("gt.pfm"))
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    _grid_flags(p)
    p.add_argument("--loss", choices=["w1", "w2sq", "kl-laplace", "kl-gaussian", "smooth-l1"],
                   default="w1")
    p.add_argument("--readout", choices=["mean-grid", "mode-offset"], default="mode-offset",
                   help="readout used for the emitted prediction map")
    p.add_argument("--mm", action="store_true", help="train on multi-modal patch targets")
    p.add_argument("--mm-k", type=int, default=3, help="patch size of multi-modal targets")
    p.add_argument("--mm-alpha", type=float, default=0.8, help="center weight of multi-modal targets")
    p.add_argument("--window", type=int, default=5, help="SAD matching window")
    p.add_argument("--no-offsets", action="store_true", help="freeze offsets at zero")
    _trainer_flags(p, steps=2000, sample=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score a prediction map against ground truth")
    p.add_argument("--pred", type=Path, required=True, help="prediction PFM")
    p.add_argument("--gt", type=Path, required=True, help="ground-truth PFM")
    p.add_argument("--focal", type=float, default=None, help="focal length in pixels")
    p.add_argument("--baseline", type=float, default=None, help="camera baseline in meters")
    p.add_argument("--boundary-threshold", type=float, default=None,
                   help="emit boundary-restricted metrics for this disparity jump")
    p.add_argument("--out", type=Path, default=None, help="report path (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check", help="run the numerical self-check suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs", type=int, default=300, help="random mixture pairs")
    p.add_argument("--instances", type=int, default=60, help="random instances per gradient suite")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("ablate", help="readout/loss and bin-size ablation table as CSV")
    p.add_argument("--out", type=Path, default=None, help="CSV path (default: stdout)")
    _grid_flags(p)
    _trainer_flags(p, steps=800, sample=4000)
    p.set_defaults(func=cmd_ablate)
    return parser


def cmd_synth(args) -> int:
    if args.spec is not None:
        spec = fileio.load_scene_spec(args.spec.read_bytes())
    else:
        spec = stereo.default_scene()
    if args.seed is not None:
        spec = stereo.SceneSpec(spec.width, spec.height, spec.background_disparity,
                                spec.objects, spec.texture, args.seed)
    grid = _grid_from(args)
    left, right, gt = stereo.synth_scene(spec, grid)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "left.pgm").write_bytes(fileio.image_to_pgm_bytes(left))
    (args.out / "right.pgm").write_bytes(fileio.image_to_pgm_bytes(right))
    (args.out / "gt.pfm").write_bytes(fileio.write_pfm(fileio.disparity_map_to_pfm(gt)))
    return 0


def _dump_head(head: stereo.OffsetHead, grid: GridSpec, args) -> bytes:
    doc = {
        "weights": list(head.weights),
        "bias": head.bias,
        "log_tau": head.log_tau,
        "enabled": head.enabled,
        "grid": {"origin": grid.origin, "bin_size": grid.bin_size, "count": grid.count},
        "loss": args.loss,
        "steps": args.steps,
    }
    return (json.dumps(doc, indent=2) + "\n").encode("ascii")


def cmd_fit(args) -> int:
    left = fileio.pgm_bytes_to_image(args.left.read_bytes())
    right = fileio.pgm_bytes_to_image(args.right.read_bytes())
    gt = fileio.pfm_to_disparity_map(fileio.read_pfm(args.gt.read_bytes()))
    grid = _grid_from(args)
    cv = stereo.cost_volume_sad(left, right, grid, args.window)
    trainer = stereo.TrainerConfig(args.steps, args.lr, args.seed, args.sample)
    head, trace = stereo.fit(cv, gt, grid, args.loss, args.mm, args.mm_k, args.mm_alpha,
                             trainer, offsets_enabled=not args.no_offsets)
    pred = stereo.predict(cv, head, grid, args.readout)

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "model.json").write_bytes(_dump_head(head, grid, args))
    with (args.out / "trace.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for step, value in enumerate(trace):
            writer.writerow([step, repr(float(value))])
    (args.out / "pred.pfm").write_bytes(fileio.write_pfm(fileio.disparity_map_to_pfm(pred)))
    return 0


def cmd_eval(args) -> int:
    pred = fileio.pfm_to_disparity_map(fileio.read_pfm(args.pred.read_bytes()))
    gt = fileio.pfm_to_disparity_map(fileio.read_pfm(args.gt.read_bytes()))
    rig = None
    if (args.focal is None) != (args.baseline is None):
        raise ValueError("--focal and --baseline must be given together")
    if args.focal is not None:
        rig = CameraRig(args.focal, args.baseline)
    report = metrics.evaluate(pred, gt, rig, args.boundary_threshold)
    payload = fileio.dump_report(report)
    if args.out is None:
        sys.stdout.write(payload.decode("ascii"))
    else:
        args.out.write_bytes(payload)
    return 0


def cmd_check(args) -> int:
    results = checks.run_all(seed=args.seed, n_pairs=args.pairs, n_grad=args.instances)
    all_ok = True
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{res.name}: max error {res.max_error:.3e} (tol {res.tolerance:.1e}) {status}")
        all_ok &= res.passed
    return 0 if all_ok else 1


# (config name, loss, offsets enabled, readout); the 2x2 of Table-style
# readout/loss arms followed by the extra loss arms.
_ABLATION_ARMS = (
    ("regression", "smooth-l1", False, "mean-grid"),
    ("regression+offsets", "smooth-l1-shifted", True, "mean-offset"),
    ("w1", "w1", False, "mode-offset"),
    ("w1+offsets", "w1", True, "mode-offset"),
    ("w2sq+offsets", "w2sq", True, "mode-offset"),
    ("kl-laplace+offsets", "kl-laplace", True, "mode-offset"),
)
_ABLATION_BIN_SIZES = (1.0, 2.0, 4.0)


def run_ablation(grid: GridSpec, trainer: stereo.TrainerConfig, scene=None):
    """All ablation rows on the default seeded scene; returns list of dicts."""
    scene = scene or stereo.default_scene()
    span = grid.count * grid.bin_size
    rows = []

    def one(name, loss, offsets_enabled, readout, run_grid):
        result = stereo.run_pipeline(
            scene, run_grid, loss=loss, readout=readout, trainer=trainer,
            offsets_enabled=offsets_enabled)
        report = metrics.evaluate(result.prediction, result.gt,
                                  boundary_threshold=run_grid.bin_size)
        rows.append({
            "config": name,
            "epe": report.epe,
            "1pe": report.pe[1.0],
            "3pe": report.pe[3.0],
            "boundary_epe": report.boundary.epe,
        })

    for name, loss, offsets_enabled, readout in _ABLATION_ARMS:
        one(name, loss, offsets_enabled, readout, grid)
    for s in _ABLATION_BIN_SIZES:
        sweep_grid = GridSpec(grid.origin, s, max(2, round(span / s)), grid.domain_kind)
        one(f"w1+offsets/s={s:g}", "w1", True, "mode-offset", sweep_grid)
    return rows


def cmd_ablate(args) -> int:
    grid = _grid_from(args)
    trainer = stereo.TrainerConfig(args.steps, args.lr, args.seed, args.sample)
    rows = run_ablation(grid, trainer)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["config", "epe", "1pe", "3pe", "boundary_epe"])
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    if args.out is None:
        sys.stdout.write(buf.getvalue())
    else:
        args.out.write_text(buf.getvalue())
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
