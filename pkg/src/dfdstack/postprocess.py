"""Depth map cleanup: flag high-variation regions and fill them in.

Reconstruction errors concentrate where the recovered depth oscillates, so
a local total-variation score (normalized by the map's depth range) above a
threshold marks suspect pixels, which are then replaced by diffusing values
inward from their trusted neighbors.
"""

from __future__ import annotations

import numpy as np

from .core import DepthMap, ValidationError
from .depth_step import windowed_error

_NEIGHBORS_8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def local_tv_map(depth: DepthMap, radius: int = 2) -> np.ndarray:
    """Windowed mean of |forward difference| (horizontal plus vertical),
    normalized by the depth map's valid range. Edges replicate, so border
    differences vanish."""
    if not (isinstance(radius, (int, np.integer)) and radius >= 0):
        raise ValidationError(f"radius must be a nonnegative integer, got {radius}")
    z = depth.data
    dx = np.abs(np.diff(z, axis=1, append=z[:, -1:]))
    dy = np.abs(np.diff(z, axis=0, append=z[-1:, :]))
    tv = dx + dy
    if radius > 0:
        tv = windowed_error(tv, 2 * radius + 1)
    lo, hi = depth.valid_range
    return tv / (hi - lo)


def artifact_mask(tv: np.ndarray, threshold: float = 0.4) -> np.ndarray:
    """Pixels whose normalized variation score exceeds the threshold."""
    tv = np.asarray(tv, dtype=np.float64)
    if tv.ndim != 2:
        raise ValidationError(f"variation map must be 2-D, got shape {tv.shape}")
    if not np.isfinite(threshold) or threshold < 0:
        raise ValidationError(f"threshold must be finite and nonnegative, got {threshold}")
    return tv > threshold


def inpaint_mean(depth: DepthMap, mask: np.ndarray) -> DepthMap:
    """Replace masked pixels by flooding inward from unmasked ones.

    Each round simultaneously assigns every still-unfilled pixel with at
    least one filled 8-neighbor the mean of those neighbors, so values
    propagate one ring per round and the result is order-independent.
    """
    mask = np.asarray(mask)
    if mask.shape != depth.data.shape:
        raise ValidationError(f"mask shape {mask.shape} differs from depth shape {depth.data.shape}")
    mask = mask.astype(bool)
    if mask.all():
        raise ValidationError("cannot inpaint a fully masked depth map")
    if not mask.any():
        return DepthMap(depth.data.copy(), valid_range=depth.valid_range)

    m, n = depth.data.shape
    filled = depth.data.copy()
    known = ~mask
    while not known.all():
        values = np.where(known, filled, 0.0)
        weight = known.astype(np.float64)
        nb_sum = np.zeros((m, n))
        nb_cnt = np.zeros((m, n))
        for du, dv in _NEIGHBORS_8:
            di0, di1 = max(0, -du), min(m, m - du)
            dj0, dj1 = max(0, -dv), min(n, n - dv)
            if di0 >= di1 or dj0 >= dj1:
                continue
            nb_sum[di0:di1, dj0:dj1] += values[di0 + du:di1 + du, dj0 + dv:dj1 + dv]
            nb_cnt[di0:di1, dj0:dj1] += weight[di0 + du:di1 + du, dj0 + dv:dj1 + dv]
        ring = ~known & (nb_cnt > 0)
        if not ring.any():
            raise ValidationError("mask has pixels unreachable from any unmasked pixel")
        filled[ring] = nb_sum[ring] / nb_cnt[ring]
        known |= ring
    return DepthMap(filled, valid_range=depth.valid_range)
