"""Alternating reconstruction of depth and AIF from a focal stack.

Each epoch runs a depth update (grid scan plus golden-section refinement,
merged pixelwise against the previous depth) followed by an AIF update
(projected FISTA warm-started from the current AIF, with an iteration
budget that grows geometrically over epochs). Both halves minimize the same
data term, each with the other variable held fixed, and the merge keeps the
pointwise-better depth, so the logged loss never increases.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .aif_step import FistaConfig, build_operator_stack, fista_solve, stack_objective
from .core import CameraConfig, DepthMap, FocalStack, Image, ValidationError, readonly_array
from .depth_step import (
    DepthStepConfig,
    _pixel_error,
    grid_search,
    refine_depth,
    windowed_error,
)
from .optics import build_blur_stack, build_sparse_operator
from .stitch import StitchConfig, stitch_aif

log = logging.getLogger(__name__)


def schedule_iters(t0: int, alpha: float, epoch: int) -> int:
    """AIF iteration budget for an epoch: t0 * alpha ** epoch, rounded half
    up, never below one."""
    if t0 < 1:
        raise ValidationError(f"base iteration count must be positive, got {t0}")
    if alpha <= 0:
        raise ValidationError(f"growth factor must be positive, got {alpha}")
    if epoch < 0:
        raise ValidationError(f"epoch must be nonnegative, got {epoch}")
    return max(1, math.floor(t0 * alpha**epoch + 0.5))


@dataclass(frozen=True)
class SolverConfig:
    """Full reconstruction configuration.

    min_blur_radius_px / max_kernel_size of None keep the stack camera's
    values; otherwise they override them for the solve.
    """

    epochs: int = 5
    t0: int = 10
    alpha: float = 2.0
    depth_range: tuple[float, float] = (0.1, 10.0)
    depth: DepthStepConfig = field(default_factory=DepthStepConfig)
    fista: FistaConfig = field(default_factory=FistaConfig)
    stitch: StitchConfig = field(default_factory=StitchConfig)
    renormalize_boundary: bool = False
    min_blur_radius_px: float | None = None
    max_kernel_size: int | None = None
    preset: str = "custom"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be positive, got {self.epochs}")
        if self.t0 < 1:
            raise ValidationError(f"t0 must be positive, got {self.t0}")
        if self.alpha < 1:
            raise ValidationError(f"alpha must be at least 1, got {self.alpha}")
        z_min, z_max = (float(v) for v in self.depth_range)
        if not (0 < z_min < z_max):
            raise ValidationError(f"depth range must satisfy 0 < z_min < z_max, got [{z_min}, {z_max}]")
        object.__setattr__(self, "depth_range", (z_min, z_max))

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "epochs": self.epochs,
            "t0": self.t0,
            "alpha": self.alpha,
            "depth_range": list(self.depth_range),
            "renormalize_boundary": self.renormalize_boundary,
            "min_blur_radius_px": self.min_blur_radius_px,
            "max_kernel_size": self.max_kernel_size,
            "depth": {
                "grid_samples": self.depth.grid_samples,
                "window_size": self.depth.window_size,
                "gss_tol": self.depth.gss_tol,
                "gss_max_iters": self.depth.gss_max_iters,
                "refine_bracket": self.depth.refine_bracket,
                "inverse_depth_grid": self.depth.inverse_depth_grid,
            },
            "fista": {
                "max_iters": self.fista.max_iters,
                "clip_range": list(self.fista.clip_range) if self.fista.clip_range else None,
                "power_iters": self.fista.power_iters,
                "power_tol": self.fista.power_tol,
                "lipschitz_safety": self.fista.lipschitz_safety,
            },
            "stitch": {
                "smoothness_weight": self.stitch.smoothness_weight,
                "patch_radius": self.stitch.patch_radius,
                "patch_sigma": self.stitch.patch_sigma,
                "max_sweeps": self.stitch.max_sweeps,
            },
        }

    @staticmethod
    def from_dict(raw: dict) -> "SolverConfig":
        if not isinstance(raw, dict):
            raise ValidationError("solver config must be a JSON object")
        known = {
            "preset",
            "epochs",
            "t0",
            "alpha",
            "depth_range",
            "renormalize_boundary",
            "min_blur_radius_px",
            "max_kernel_size",
            "depth",
            "fista",
            "stitch",
        }
        for key in raw:
            if key not in known:
                log.warning("solver config: ignoring unknown key %r", key)
        depth_raw = dict(raw.get("depth", {}))
        fista_raw = dict(raw.get("fista", {}))
        stitch_raw = dict(raw.get("stitch", {}))
        clip = fista_raw.get("clip_range")
        if clip is not None:
            fista_raw["clip_range"] = (float(clip[0]), float(clip[1]))
        try:
            depth_cfg = DepthStepConfig(**depth_raw)
            fista_cfg = FistaConfig(**fista_raw)
            stitch_cfg = StitchConfig(**stitch_raw)
        except TypeError as exc:
            raise ValidationError(f"solver config malformed: {exc}") from exc
        rng = raw.get("depth_range", (0.1, 10.0))
        return SolverConfig(
            epochs=int(raw.get("epochs", 5)),
            t0=int(raw.get("t0", 10)),
            alpha=float(raw.get("alpha", 2.0)),
            depth_range=(float(rng[0]), float(rng[1])),
            depth=depth_cfg,
            fista=fista_cfg,
            stitch=stitch_cfg,
            renormalize_boundary=bool(raw.get("renormalize_boundary", False)),
            min_blur_radius_px=raw.get("min_blur_radius_px"),
            max_kernel_size=raw.get("max_kernel_size"),
            preset=str(raw.get("preset", "custom")),
        )


def _preset(name: str, **kwargs) -> SolverConfig:
    return SolverConfig(preset=name, **kwargs)


_PRESETS = {
    "fast": lambda: _preset(
        "fast",
        epochs=5,
        t0=10,
        alpha=2.0,
        depth_range=(0.1, 10.0),
        depth=DepthStepConfig(grid_samples=100, window_size=1),
        min_blur_radius_px=2.0,
    ),
    "nyuv2-accurate": lambda: _preset(
        "nyuv2-accurate",
        epochs=40,
        t0=200,
        alpha=1.05,
        depth_range=(0.1, 10.0),
        depth=DepthStepConfig(grid_samples=100, window_size=1),
        min_blur_radius_px=2.0,
    ),
    "make3d": lambda: _preset(
        "make3d",
        epochs=5,
        t0=10,
        alpha=2.0,
        depth_range=(0.01, 80.0),
        depth=DepthStepConfig(grid_samples=100, window_size=5),
        min_blur_radius_px=0.5,
    ),
    "mobile": lambda: _preset(
        "mobile",
        epochs=5,
        t0=10,
        alpha=2.0,
        depth_range=(1.0, 800.0),
        depth=DepthStepConfig(grid_samples=200, window_size=50),
        min_blur_radius_px=0.1,
    ),
}

PRESET_NAMES = tuple(sorted(_PRESETS))

_CAMERA_PRESETS = {
    "nyuv2": (
        CameraConfig(
            focal_length_m=0.05,
            aperture_diameter_m=0.00625,
            pixel_size_m=1.2e-5,
            min_blur_radius_px=2.0,
            max_kernel_size=17,
        ),
        (1.0, 1.5, 2.5, 4.0, 6.0),
    ),
}

CAMERA_PRESET_NAMES = tuple(sorted(_CAMERA_PRESETS))


def preset_config(name: str) -> SolverConfig:
    """Named solver configuration."""
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}, expected one of {list(PRESET_NAMES)}") from None


def camera_preset(name: str) -> tuple[CameraConfig, tuple[float, ...]]:
    """Named camera plus its focus distances."""
    try:
        return _CAMERA_PRESETS[name]
    except KeyError:
        raise ValidationError(
            f"unknown camera preset {name!r}, expected one of {list(CAMERA_PRESET_NAMES)}"
        ) from None


def candidate_grid(depth_range: tuple[float, float], samples: int, inverse: bool = False) -> np.ndarray:
    """Strictly increasing depth candidates spanning the range, spaced
    linearly in depth or in inverse depth."""
    z_min, z_max = depth_range
    if not (0 < z_min < z_max):
        raise ValidationError(f"depth range must satisfy 0 < z_min < z_max, got [{z_min}, {z_max}]")
    if samples < 2:
        raise ValidationError(f"grid needs at least 2 samples, got {samples}")
    if inverse:
        return np.sort(1.0 / np.linspace(1.0 / z_max, 1.0 / z_min, samples))
    return np.linspace(z_min, z_max, samples)


@dataclass(frozen=True)
class TracePoint:
    """One logged loss value: phase is 'depth' or 'aif'."""

    phase: str
    epoch: int
    loss: float
    elapsed_s: float


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    depth: DepthMap
    aif: Image
    loss_trace: tuple[TracePoint, ...]
    epochs_run: int
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", readonly_array(self.labels, dtype=np.int64))

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1].loss


def _model_error(depth: DepthMap, aif: Image, stack: FocalStack, camera: CameraConfig,
                 renormalize_boundary: bool) -> np.ndarray:
    aif_flat = aif.data.reshape(-1, aif.channels)
    shape = (stack.height, stack.width, stack.channels)
    pred = [
        build_sparse_operator(depth, camera, zf, renormalize_boundary)
        .apply_flat(aif_flat)
        .reshape(shape)
        for zf in stack.focus_distances
    ]
    return _pixel_error(pred, stack.frame_arrays())


def reconstruct(stack: FocalStack, config: SolverConfig, threads: int = 1) -> ReconstructionResult:
    """Recover depth and AIF by direct alternating minimization.

    Runs config.epochs epochs, stopping early once the epoch-final loss
    improves by less than 1e-8 for two epochs in a row. The loss trace holds
    one point after each half step, is non-increasing, and its last value
    equals stack_objective of the returned pair.
    """
    if threads < 1:
        raise ValidationError(f"thread count must be positive, got {threads}")
    camera = stack.camera
    if config.min_blur_radius_px is not None:
        camera = replace(camera, min_blur_radius_px=float(config.min_blur_radius_px))
    if config.max_kernel_size is not None:
        camera = replace(camera, max_kernel_size=int(config.max_kernel_size))
    candidates = candidate_grid(config.depth_range, config.depth.grid_samples, config.depth.inverse_depth_grid)
    rb = config.renormalize_boundary
    started = time.perf_counter()

    aif, labels = stitch_aif(stack, config.stitch)
    log.info("stitched initial AIF from %d frames", stack.num_frames)

    depth: DepthMap | None = None
    trace: list[TracePoint] = []
    epochs_run = 0
    plateau = 0
    prev_epoch_loss: float | None = None
    window = config.depth.window_size
    for epoch in range(config.epochs):
        blur = build_blur_stack(aif, camera, stack.focus_distances, candidates, rb, threads)
        grid = grid_search(blur, stack, config.depth)
        refined = refine_depth(grid, aif, stack, camera, config.depth, rb)

        # Pixelwise merge against the previous epoch's depth, compared under
        # the active (possibly windowed) error for the current AIF.
        new_plain = _model_error(refined, aif, stack, camera, rb)
        new_active = windowed_error(new_plain, window) if window > 1 else new_plain
        if depth is None:
            depth = refined
            sel_plain = new_plain
        else:
            prev_plain = _model_error(depth, aif, stack, camera, rb)
            prev_active = windowed_error(prev_plain, window) if window > 1 else prev_plain
            better = new_active < prev_active
            depth = DepthMap(np.where(better, refined.data, depth.data), valid_range=depth.valid_range)
            sel_plain = np.where(better, new_plain, prev_plain)
        loss_depth = float(np.mean(sel_plain))
        trace.append(TracePoint("depth", epoch, loss_depth, time.perf_counter() - started))

        ops = build_operator_stack(depth, camera, stack.focus_distances, rb)
        iters = schedule_iters(config.t0, config.alpha, epoch)
        aif = fista_solve(ops, stack, aif, config.fista, iters=iters)
        loss_aif = stack_objective(ops, aif, stack)
        trace.append(TracePoint("aif", epoch, loss_aif, time.perf_counter() - started))
        log.info(
            "epoch %d: depth loss %.6e, aif loss %.6e (%d fista iters)",
            epoch, loss_depth, loss_aif, iters,
        )

        epochs_run = epoch + 1
        if prev_epoch_loss is not None and prev_epoch_loss - loss_aif < 1e-8:
            plateau += 1
        else:
            plateau = 0
        prev_epoch_loss = loss_aif
        if plateau >= 2:
            log.info("loss plateaued; stopping after epoch %d", epoch)
            break

    assert depth is not None
    return ReconstructionResult(
        depth=depth, aif=aif, loss_trace=tuple(trace), epochs_run=epochs_run, labels=labels
    )
