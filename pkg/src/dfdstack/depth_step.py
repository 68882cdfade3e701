"""Depth update: per-pixel search over blur hypotheses.

The data term for a depth hypothesis at pixel p is the squared difference,
averaged over frames and channels, between the observed stack and the AIF
blurred under that hypothesis. A coarse pass scans a fixed candidate grid
using precomputed blur layers; golden-section refinement then tightens each
pixel inside its bracket of neighboring candidates. Windowed variants
average the per-pixel error over a square window clipped at the borders.

One reduction order is used for every error evaluation in the package
(channel sum per frame, frame accumulation, then division), so equal inputs
give bit-equal losses across the grid, refine, and AIF steps.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .core import CameraConfig, DepthMap, FocalStack, Image, ValidationError, readonly_array
from .optics import BlurStack, build_sparse_operator

log = logging.getLogger(__name__)

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class DepthStepConfig:
    """Grid and refinement settings for the depth update."""

    grid_samples: int = 100
    window_size: int = 1
    gss_tol: float = 1e-2
    gss_max_iters: int = 100
    refine_bracket: float = 1.0
    inverse_depth_grid: bool = False

    def __post_init__(self):
        if self.grid_samples < 2:
            raise ValidationError(f"grid needs at least 2 samples, got {self.grid_samples}")
        if not (isinstance(self.window_size, (int, np.integer)) and self.window_size >= 1):
            raise ValidationError(f"window size must be a positive integer, got {self.window_size}")
        if self.gss_tol <= 0:
            raise ValidationError("golden-section tolerance must be positive")
        if self.gss_max_iters < 1:
            raise ValidationError("golden-section iteration cap must be positive")
        if not 0.0 < self.refine_bracket <= 1.0:
            raise ValidationError("refine bracket must be in (0, 1] grid spacings")


def _frame_arrays(obj) -> list[np.ndarray]:
    """Normalize a FocalStack or sequence of images/arrays to (m, n, C) arrays."""
    if isinstance(obj, FocalStack):
        return obj.frame_arrays()
    if isinstance(obj, Sequence):
        out = []
        for item in obj:
            arr = item.data if isinstance(item, Image) else np.asarray(item, dtype=np.float64)
            if arr.ndim == 2:
                arr = arr[:, :, None]
            if arr.ndim != 3:
                raise ValidationError(f"frame must be 2-D or 3-D, got shape {arr.shape}")
            out.append(arr)
        if not out:
            raise ValidationError("empty frame sequence")
        return out
    raise ValidationError(f"expected a focal stack or frame sequence, got {type(obj).__name__}")


def _pixel_error(pred: list[np.ndarray], obs: list[np.ndarray]) -> np.ndarray:
    if len(pred) != len(obs):
        raise ValidationError(f"frame count mismatch: {len(pred)} predicted vs {len(obs)} observed")
    shape = obs[0].shape
    acc = np.zeros(shape[:2])
    for p, o in zip(pred, obs):
        if p.shape != shape or o.shape != shape:
            raise ValidationError(f"frame shape mismatch: {p.shape} vs {shape}")
        diff = p - o
        acc += (diff * diff).sum(axis=2)
    return acc / (len(obs) * shape[2])


def error_map(predicted, observed) -> np.ndarray:
    """Per-pixel squared error between two stacks, averaged over frames and
    channels. Accepts focal stacks or plain frame sequences."""
    return _pixel_error(_frame_arrays(predicted), _frame_arrays(observed))


def _window_offsets(window_size: int) -> range:
    # Odd sizes center the window; even sizes span one extra entry before.
    half = window_size // 2
    return range(-half, window_size - half)


def windowed_error(err: np.ndarray, window_size: int) -> np.ndarray:
    """Mean of err over a window_size x window_size window clipped at the
    borders; each pixel divides by its own in-bounds count."""
    err = np.asarray(err, dtype=np.float64)
    if err.ndim != 2:
        raise ValidationError(f"error map must be 2-D, got shape {err.shape}")
    if not (isinstance(window_size, (int, np.integer)) and window_size >= 1):
        raise ValidationError(f"window size must be a positive integer, got {window_size}")
    if window_size == 1:
        return err.copy()
    m, n = err.shape
    acc = np.zeros((m, n))
    cnt = np.zeros((m, n))
    offsets = _window_offsets(window_size)
    for du in offsets:
        di0, di1 = max(0, -du), min(m, m - du)
        if di0 >= di1:
            continue
        for dv in offsets:
            dj0, dj1 = max(0, -dv), min(n, n - dv)
            if dj0 >= dj1:
                continue
            acc[di0:di1, dj0:dj1] += err[di0 + du:di1 + du, dj0 + dv:dj1 + dv]
            cnt[di0:di1, dj0:dj1] += 1.0
    return acc / cnt


@dataclass(frozen=True, eq=False)
class GridSearchResult:
    """Winning depth per pixel plus its candidate index and error."""

    depth: DepthMap
    indices: np.ndarray
    errors: np.ndarray
    candidate_depths: tuple[float, ...]

    def __post_init__(self):
        indices = readonly_array(self.indices, dtype=np.int64)
        errors = readonly_array(self.errors)
        if indices.shape != self.depth.data.shape or errors.shape != self.depth.data.shape:
            raise ValidationError("grid result fields must share the depth map's shape")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "errors", errors)
        object.__setattr__(self, "candidate_depths", tuple(float(z) for z in self.candidate_depths))


def grid_search(blur: BlurStack, observed, config: DepthStepConfig) -> GridSearchResult:
    """Pick the best blur hypothesis per pixel by exhaustive scan.

    Candidates are visited in increasing depth order with a strict running
    minimum, so ties resolve to the smallest depth. With window_size > 1 the
    comparison uses the windowed error. The observed stack may be a focal
    stack or a plain frame sequence.
    """
    if blur.num_candidates < 2:
        raise ValidationError("grid search needs at least 2 candidate depths")
    obs = _frame_arrays(observed)
    if blur.num_frames != len(obs):
        raise ValidationError(
            f"blur stack has {blur.num_frames} frames, observed stack {len(obs)}"
        )
    ref = blur.layers[0][0]
    if ref.data.shape != obs[0].shape:
        raise ValidationError("blur stack and observed stack dimensions differ")
    m, n = obs[0].shape[:2]
    best_err = np.full((m, n), np.inf)
    best_idx = np.zeros((m, n), dtype=np.int64)
    for ci in range(blur.num_candidates):
        err = _pixel_error([img.data for img in blur.layers[ci]], obs)
        if config.window_size > 1:
            err = windowed_error(err, config.window_size)
        better = err < best_err
        best_err = np.where(better, err, best_err)
        best_idx = np.where(better, ci, best_idx)
    cands = np.asarray(blur.candidate_depths)
    depth = DepthMap(cands[best_idx], valid_range=(cands[0], cands[-1]))
    return GridSearchResult(
        depth=depth, indices=best_idx, errors=best_err, candidate_depths=blur.candidate_depths
    )


def golden_section_refine(objective, lo: float, hi: float, tol: float = 1e-2, max_iters: int = 100) -> float:
    """Golden-section minimum of a scalar unimodal function on [lo, hi].

    Shrinks the bracket until its width is at most tol or the iteration cap
    is hit, then returns the bracket midpoint.
    """
    lo, hi = float(lo), float(hi)
    if not hi > lo:
        raise ValidationError(f"bracket must satisfy lo < hi, got [{lo}, {hi}]")
    if tol <= 0 or max_iters < 1:
        raise ValidationError("tolerance and iteration cap must be positive")
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = objective(c), objective(d)
    for _ in range(max_iters):
        if b - a <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = objective(d)
    return 0.5 * (a + b)


def _shift_map(depth: np.ndarray, du: int, dv: int) -> np.ndarray:
    """Shift so out[q] = depth[q - (du, dv)], replicating edges where the
    source falls outside (those entries are never read back)."""
    m, n = depth.shape
    out = np.empty_like(depth)
    di0, di1 = max(0, du), min(m, m + du)
    src = depth[di0 - du:di1 - du]
    if di0 > 0:
        out[:di0] = src[0]
    if di1 < m:
        out[di1:] = src[-1]
    out[di0:di1] = src
    dj0, dj1 = max(0, dv), min(n, n + dv)
    col = out[:, dj0 - dv:dj1 - dv].copy()
    if dj0 > 0:
        out[:, :dj0] = col[:, :1]
    if dj1 < n:
        out[:, dj1:] = col[:, -1:]
    out[:, dj0:dj1] = col
    return out


class _RefineObjective:
    """Windowed data term of a trial depth map, each pixel's hypothesis held
    constant across its window.

    For offset o the stack is rendered with the depth map shifted by o, so
    the error at q reflects pixel q - o's hypothesis applied at q; summing
    over in-bounds offsets and dividing by the count reproduces the windowed
    error while keeping each pixel's objective a function of its own depth.
    """

    def __init__(self, aif, observed, camera, window_size, valid_range, renormalize_boundary):
        self.aif_flat = aif.data.reshape(-1, aif.channels)
        self.obs = observed.frame_arrays()
        self.focus_distances = observed.focus_distances
        self.camera = camera
        self.window_size = int(window_size)
        self.valid_range = valid_range
        self.renormalize_boundary = renormalize_boundary
        self.shape = (observed.height, observed.width)
        self.channels = observed.channels
        self.evals = 0

    def _render_error(self, depth_data: np.ndarray) -> np.ndarray:
        depth = DepthMap(depth_data, valid_range=self.valid_range)
        pred = []
        for zf in self.focus_distances:
            op = build_sparse_operator(depth, self.camera, zf, self.renormalize_boundary)
            pred.append(op.apply_flat(self.aif_flat).reshape(*self.shape, self.channels))
        return _pixel_error(pred, self.obs)

    def __call__(self, depth_data: np.ndarray) -> np.ndarray:
        self.evals += 1
        if self.window_size == 1:
            return self._render_error(depth_data)
        m, n = self.shape
        acc = np.zeros((m, n))
        cnt = np.zeros((m, n))
        for du in _window_offsets(self.window_size):
            di0, di1 = max(0, -du), min(m, m - du)
            if di0 >= di1:
                continue
            for dv in _window_offsets(self.window_size):
                dj0, dj1 = max(0, -dv), min(n, n - dv)
                if dj0 >= dj1:
                    continue
                err = self._render_error(_shift_map(depth_data, du, dv))
                acc[di0:di1, dj0:dj1] += err[di0 + du:di1 + du, dj0 + dv:dj1 + dv]
                cnt[di0:di1, dj0:dj1] += 1.0
        return acc / cnt


def refine_depth(
    grid: GridSearchResult,
    aif: Image,
    observed: FocalStack,
    camera: CameraConfig,
    config: DepthStepConfig,
    renormalize_boundary: bool = False,
) -> DepthMap:
    """Tighten each pixel's depth inside its grid bracket by golden-section
    search, run on the whole field at once.

    The bracket spans the candidates adjacent to the winner (clamped at the
    grid ends), shrunk toward the winner when ``refine_bracket`` < 1. Pixels
    whose refined value would not improve on the grid value keep the grid
    value.
    """
    cands = np.asarray(grid.candidate_depths)
    if cands.size < 2:
        raise ValidationError("refinement needs at least 2 grid candidates")
    idx = grid.indices
    objective = _RefineObjective(
        aif, observed, camera, config.window_size, grid.depth.valid_range, renormalize_boundary
    )

    lo = cands[np.maximum(idx - 1, 0)]
    hi = cands[np.minimum(idx + 1, cands.size - 1)]
    if config.refine_bracket == 1.0:
        a, b = lo, hi
    else:
        sel = cands[idx]
        a = sel - config.refine_bracket * (sel - lo)
        b = sel + config.refine_bracket * (hi - sel)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = objective(c)
    fd = objective(d)
    for _ in range(config.gss_max_iters):
        active = (b - a) > config.gss_tol
        if not active.any():
            break
        left = (fc < fd) & active
        right = active & ~left
        b[left] = d[left]
        d[left] = c[left]
        fd[left] = fc[left]
        c[left] = b[left] - _INVPHI * (b[left] - a[left])
        a[right] = c[right]
        c[right] = d[right]
        fc[right] = fd[right]
        d[right] = a[right] + _INVPHI * (b[right] - a[right])
        trial = np.where(left, c, d)
        f_trial = objective(trial)
        fc[left] = f_trial[left]
        fd[right] = f_trial[right]
    mid = 0.5 * (a + b)

    f_mid = objective(mid)
    f_grid = objective(grid.depth.data)
    refined = np.where(f_mid <= f_grid, mid, grid.depth.data)
    log.debug(
        "refine: %d objective evaluations, %.1f%% pixels kept grid value",
        objective.evals,
        100.0 * float(np.mean(f_mid > f_grid)),
    )
    return DepthMap(refined, valid_range=grid.depth.valid_range)


def merge_best(prev: DepthMap, new: DepthMap, prev_err: np.ndarray, new_err: np.ndarray) -> DepthMap:
    """Keep, per pixel, whichever depth has the lower error; ties keep prev."""
    if prev.data.shape != new.data.shape:
        raise ValidationError("depth maps to merge must share a shape")
    prev_err = np.asarray(prev_err, dtype=np.float64)
    new_err = np.asarray(new_err, dtype=np.float64)
    if prev_err.shape != prev.data.shape or new_err.shape != prev.data.shape:
        raise ValidationError("error maps must share the depth maps' shape")
    better = new_err < prev_err
    return DepthMap(np.where(better, new.data, prev.data), valid_range=prev.valid_range)
