"""Depth accuracy metrics.

All metrics run over an optional boolean mask (default: every pixel) and
raise EvaluationError when the mask is empty or a metric's domain is
violated on it. Threshold accuracies use strict inequality, so a ratio
exactly at the threshold does not count.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import DepthMap, EvaluationError, ValidationError

_PROTOCOL_CAPS = {"c1": 70.0, "c2": 80.0}


def _depth_array(x) -> np.ndarray:
    arr = x.data if isinstance(x, DepthMap) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"depth must be a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("depth contains NaN or Inf")
    return arr


def _resolve(pred, gt, mask) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = _depth_array(pred)
    g = _depth_array(gt)
    if p.shape != g.shape:
        raise ValidationError(f"prediction shape {p.shape} differs from ground truth {g.shape}")
    if mask is None:
        mask = np.ones(p.shape, dtype=bool)
    else:
        mask = np.asarray(mask)
        if mask.shape != p.shape:
            raise ValidationError(f"mask shape {mask.shape} differs from depth shape {p.shape}")
        mask = mask.astype(bool)
    if not mask.any():
        raise EvaluationError("evaluation mask is empty")
    return p, g, mask


def rmse(pred, gt, mask=None) -> float:
    """Root mean squared depth error over the mask."""
    p, g, m = _resolve(pred, gt, mask)
    diff = p[m] - g[m]
    return float(np.sqrt(np.mean(diff * diff)))


def abs_rel(pred, gt, mask=None) -> float:
    """Mean absolute error relative to ground truth over the mask."""
    p, g, m = _resolve(pred, gt, mask)
    if np.any(g[m] <= 0):
        raise EvaluationError("relative error needs strictly positive ground truth on the mask")
    return float(np.mean(np.abs(p[m] - g[m]) / g[m]))


def delta_accuracy(pred, gt, k: int = 1, mask=None) -> float:
    """Fraction of masked pixels with max(pred/gt, gt/pred) < 1.25 ** k."""
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise ValidationError(f"threshold exponent must be a positive integer, got {k}")
    p, g, m = _resolve(pred, gt, mask)
    pv, gv = p[m], g[m]
    if np.any(gv <= 0) or np.any(pv <= 0):
        raise EvaluationError("threshold accuracy needs strictly positive depths on the mask")
    ratio = np.maximum(pv / gv, gv / pv)
    return float(np.mean(ratio < 1.25 ** k))


@dataclass(frozen=True)
class EvalReport:
    """Bundle of the standard metrics over one evaluation mask."""

    rmse: float
    abs_rel: float
    delta1: float
    delta2: float
    delta3: float
    pixel_count: int
    protocol: str | None = None
    cap_mode: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format_table(self) -> str:
        rows = [
            ("rmse", f"{self.rmse:.4f}"),
            ("abs_rel", f"{self.abs_rel:.4f}"),
            ("delta<1.25", f"{self.delta1:.4f}"),
            ("delta<1.25^2", f"{self.delta2:.4f}"),
            ("delta<1.25^3", f"{self.delta3:.4f}"),
            ("pixels", str(self.pixel_count)),
        ]
        if self.protocol:
            rows.append(("protocol", self.protocol + (f" ({self.cap_mode})" if self.cap_mode else "")))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)


def evaluate_pair(pred, gt, mask=None) -> EvalReport:
    """All standard metrics over one mask."""
    p, g, m = _resolve(pred, gt, mask)
    return EvalReport(
        rmse=rmse(p, g, m),
        abs_rel=abs_rel(p, g, m),
        delta1=delta_accuracy(p, g, 1, m),
        delta2=delta_accuracy(p, g, 2, m),
        delta3=delta_accuracy(p, g, 3, m),
        pixel_count=int(m.sum()),
    )


def evaluate_make3d(pred, gt, protocol: str = "c1", cap_mode: str = "mask") -> EvalReport:
    """Range-capped evaluation: C1 caps at 70 m, C2 at 80 m.

    cap_mode "mask" restricts the mask to 0 < gt < cap; "clamp" keeps every
    gt > 0 pixel and clamps both maps to the cap instead.
    """
    if protocol not in _PROTOCOL_CAPS:
        raise ValidationError(f"unknown protocol {protocol!r}, expected one of {sorted(_PROTOCOL_CAPS)}")
    if cap_mode not in ("mask", "clamp"):
        raise ValidationError(f"unknown cap mode {cap_mode!r}, expected 'mask' or 'clamp'")
    cap = _PROTOCOL_CAPS[protocol]
    p = _depth_array(pred)
    g = _depth_array(gt)
    if p.shape != g.shape:
        raise ValidationError(f"prediction shape {p.shape} differs from ground truth {g.shape}")
    if cap_mode == "mask":
        mask = (g > 0) & (g < cap)
    else:
        mask = g > 0
        p = np.minimum(p, cap)
        g = np.minimum(g, cap)
    if not mask.any():
        raise EvaluationError(f"no pixels satisfy the {protocol} mask")
    return EvalReport(
        rmse=rmse(p, g, mask),
        abs_rel=abs_rel(p, g, mask),
        delta1=delta_accuracy(p, g, 1, mask),
        delta2=delta_accuracy(p, g, 2, mask),
        delta3=delta_accuracy(p, g, 3, mask),
        pixel_count=int(mask.sum()),
        protocol=protocol,
        cap_mode=cap_mode,
    )
