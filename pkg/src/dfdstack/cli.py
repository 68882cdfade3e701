"""Command-line interface.

Subcommands: simulate (render a focal stack from AIF + depth), reconstruct
(recover depth and AIF from a stack manifest), evaluate (compare two depth
maps), postprocess (flag and inpaint unstable depth regions).

Exit codes: 0 on success, 1 for invalid inputs or arguments, 2 for I/O
failures. Logs go to stderr; result summaries go to stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core import Image, ValidationError
from .io import (
    StackManifest,
    load_depth,
    load_image,
    load_manifest,
    load_stack,
    save_depth,
    save_depth_preview,
    save_image,
    save_manifest,
)
from .metrics import evaluate_make3d, evaluate_pair
from .optics import render_focal_stack
from .pipeline import (
    CAMERA_PRESET_NAMES,
    PRESET_NAMES,
    SolverConfig,
    camera_preset,
    preset_config,
    reconstruct,
)
from .postprocess import artifact_mask, inpaint_mean, local_tv_map

log = logging.getLogger(__name__)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad arguments; route that through the
    # validation exit code instead.
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _odd_positive_int(text: str) -> int:
    value = int(text)
    if value < 1 or value % 2 == 0:
        raise argparse.ArgumentTypeError(f"expected an odd positive integer, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _float_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}")
    return float(parts[0]), float(parts[1])


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _cmd_simulate(args) -> int:
    camera, focus = camera_preset(args.camera_preset)
    if args.focal_length is not None:
        camera = replace(camera, focal_length_m=args.focal_length)
    if args.aperture is not None:
        camera = replace(camera, aperture_diameter_m=args.aperture)
    if args.pixel_size is not None:
        camera = replace(camera, pixel_size_m=args.pixel_size)
    if args.min_blur is not None:
        camera = replace(camera, min_blur_radius_px=args.min_blur)
    if args.max_kernel_size is not None:
        camera = replace(camera, max_kernel_size=args.max_kernel_size)
    if args.focus_distances is not None:
        focus = args.focus_distances

    aif = load_image(args.aif, intensity_range=args.intensity_range)
    depth = load_depth(args.depth)
    stack = render_focal_stack(aif, depth, camera, focus, args.renormalize_boundary)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frame_names = []
    for k, frame in enumerate(stack.frames):
        name = f"frame_{k:02d}.pfm"
        save_image(frame, out / name)
        save_image(frame, out / f"frame_{k:02d}.png")
        frame_names.append(name)
    save_image(aif, out / "ground_truth_aif.pfm")
    save_depth(depth, out / "ground_truth_depth.pfm")
    manifest = StackManifest(
        frames=tuple(frame_names),
        focus_distances_m=stack.focus_distances,
        camera=camera,
        intensity_range=aif.intensity_range,
        ground_truth_depth="ground_truth_depth.pfm",
        ground_truth_aif="ground_truth_aif.pfm",
    )
    save_manifest(manifest, out / "manifest.json")
    print(f"wrote {len(frame_names)} frames and manifest to {out}")
    return 0


def _cmd_reconstruct(args) -> int:
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = SolverConfig.from_dict(json.load(fh))
    else:
        config = preset_config(args.preset)
    if args.epochs is not None:
        config = replace(config, epochs=args.epochs)
    if args.t0 is not None:
        config = replace(config, t0=args.t0)
    if args.alpha is not None:
        config = replace(config, alpha=args.alpha)
    z_min, z_max = config.depth_range
    if args.z_min is not None:
        z_min = args.z_min
    if args.z_max is not None:
        z_max = args.z_max
    config = replace(config, depth_range=(z_min, z_max))
    depth_cfg = config.depth
    if args.grid_samples is not None:
        depth_cfg = replace(depth_cfg, grid_samples=args.grid_samples)
    if args.window_size is not None:
        depth_cfg = replace(depth_cfg, window_size=args.window_size)
    config = replace(config, depth=depth_cfg)
    if args.renormalize_boundary:
        config = replace(config, renormalize_boundary=True)

    stack = load_stack(args.manifest)
    result = reconstruct(stack, config, threads=args.threads)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_depth(result.depth, out / "depth.pfm")
    save_depth_preview(result.depth, out / "depth.png")
    save_image(result.aif, out / "aif.pfm")
    save_image(result.aif, out / "aif.png")
    with open(out / "loss_trace.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "epoch", "loss", "elapsed_s"])
        for point in result.loss_trace:
            writer.writerow([point.phase, point.epoch, repr(point.loss), f"{point.elapsed_s:.3f}"])
    with open(out / "resolved_config.json", "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")
    if args.dump_labels:
        k = max(2, stack.num_frames)
        unit = result.labels.astype(np.float64) / (k - 1)
        save_image(Image(unit[:, :, None]), out / "labels.png")
    print(
        f"reconstructed {stack.height}x{stack.width} depth in {result.epochs_run} epochs, "
        f"final loss {result.final_loss:.6e}; outputs in {out}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    pred = load_depth(args.pred)
    gt = load_depth(args.gt)
    if args.protocol is None:
        mask = gt.data > 0
        report = evaluate_pair(pred, gt, mask)
    else:
        report = evaluate_make3d(pred, gt, protocol=args.protocol, cap_mode=args.cap_mode)
    print(report.format_table())
    if args.json_out is not None:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
            fh.write("\n")
        log.info("wrote report to %s", args.json_out)
    return 0


def _cmd_postprocess(args) -> int:
    depth = load_depth(args.depth)
    tv = local_tv_map(depth, radius=args.radius)
    mask = artifact_mask(tv, threshold=args.tv_threshold)
    cleaned = inpaint_mean(depth, mask)
    save_depth(cleaned, args.out)
    if args.dump_mask is not None:
        save_image(Image(mask.astype(np.float64)[:, :, None]), args.dump_mask)
    print(f"inpainted {int(mask.sum())} of {mask.size} pixels; wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dfdstack", description="Depth from focal stacks by alternating minimization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="render a focal stack from an AIF image and depth map")
    p_sim.add_argument("--aif", required=True, help="all-in-focus image (PNG or PFM)")
    p_sim.add_argument("--depth", required=True, help="depth map (PFM, meters)")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--camera-preset", default="nyuv2", choices=CAMERA_PRESET_NAMES)
    p_sim.add_argument("--focal-length", type=float, help="focal length in meters")
    p_sim.add_argument("--aperture", type=float, help="aperture diameter in meters")
    p_sim.add_argument("--pixel-size", type=float, help="pixel pitch in meters")
    p_sim.add_argument("--min-blur", type=float, help="minimum blur radius in pixels")
    p_sim.add_argument("--max-kernel-size", type=_odd_positive_int, help="kernel size cap (odd)")
    p_sim.add_argument("--focus-distances", type=_float_list, help="comma-separated meters")
    p_sim.add_argument("--intensity-range", type=_float_pair, default=(0.0, 1.0), metavar="LO,HI")
    p_sim.add_argument("--renormalize-boundary", action="store_true")
    p_sim.set_defaults(func=_cmd_simulate)

    p_rec = sub.add_parser("reconstruct", help="recover depth and AIF from a stack manifest")
    p_rec.add_argument("manifest", help="manifest.json of the input stack")
    p_rec.add_argument("--out", required=True, help="output directory")
    p_rec.add_argument("--preset", default="fast", choices=PRESET_NAMES)
    p_rec.add_argument("--config", help="solver config JSON (overrides --preset)")
    p_rec.add_argument("--epochs", type=_positive_int)
    p_rec.add_argument("--t0", type=_positive_int)
    p_rec.add_argument("--alpha", type=float)
    p_rec.add_argument("--grid-samples", type=_positive_int)
    p_rec.add_argument("--window-size", type=_odd_positive_int)
    p_rec.add_argument("--z-min", type=float)
    p_rec.add_argument("--z-max", type=float)
    p_rec.add_argument("--threads", type=_positive_int, default=1)
    p_rec.add_argument("--renormalize-boundary", action="store_true")
    p_rec.add_argument("--dump-labels", action="store_true", help="also write the stitch label map")
    p_rec.set_defaults(func=_cmd_reconstruct)

    p_eval = sub.add_parser("evaluate", help="compare a predicted depth map against ground truth")
    p_eval.add_argument("pred", help="predicted depth (PFM)")
    p_eval.add_argument("gt", help="ground-truth depth (PFM)")
    p_eval.add_argument("--protocol", choices=("c1", "c2"), help="range-capped protocol")
    p_eval.add_argument("--cap-mode", default="mask", choices=("mask", "clamp"))
    p_eval.add_argument("--json-out", help="also write the report as JSON")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_post = sub.add_parser("postprocess", help="inpaint high-variation depth regions")
    p_post.add_argument("depth", help="depth map to clean (PFM)")
    p_post.add_argument("--out", required=True, help="output depth path (PFM)")
    p_post.add_argument("--tv-threshold", type=float, default=0.4)
    p_post.add_argument("--radius", type=int, default=2)
    p_post.add_argument("--dump-mask", help="also write the artifact mask as PNG")
    p_post.set_defaults(func=_cmd_postprocess)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
