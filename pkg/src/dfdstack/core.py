"""Core data types for focal-stack depth reconstruction.

All arrays are float64 internally. Images are (m, n, C) with C in {1, 3},
depth maps are (m, n) in meters. Instances are immutable after construction
(the backing arrays are marked read-only) and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ValidationError(ValueError):
    """An input violates a documented invariant."""


class FormatError(ValidationError):
    """File content is not in a supported format."""


class EvaluationError(ValidationError):
    """A metric cannot be evaluated (e.g. empty mask)."""


class DegenerateOperatorError(RuntimeError):
    """The operator stack has no spectral mass; no valid step size exists."""


def readonly_array(data, dtype=np.float64) -> np.ndarray:
    """Contiguous read-only copy-or-view of data.

    Copies whenever freezing in place would mutate a writable input the
    caller still holds; an already read-only array passes through.
    """
    out = np.ascontiguousarray(data, dtype=dtype)
    if out is data and out.flags.writeable:
        out = out.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Image:
    """m x n x C intensity image with a declared nominal range.

    The range is metadata: solver intermediates may transiently exceed it,
    and only quantizing writers clamp to it. A 2-D array is promoted to a
    single-channel image.
    """

    data: np.ndarray
    intensity_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ValidationError(f"image data must be 2-D or 3-D, got shape {data.shape}")
        if data.shape[2] not in (1, 3):
            raise ValidationError(f"image must have 1 or 3 channels, got {data.shape[2]}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"image dimensions must be positive, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("image data contains NaN or Inf")
        lo, hi = (float(v) for v in self.intensity_range)
        if not lo < hi:
            raise ValidationError(f"intensity range must satisfy lo < hi, got [{lo}, {hi}]")
        object.__setattr__(self, "data", readonly_array(data))
        object.__setattr__(self, "intensity_range", (lo, hi))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class DepthMap:
    """m x n map of strictly positive depths in meters."""

    data: np.ndarray
    valid_range: tuple[float, float]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"depth map must be a 2-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("depth map contains NaN or Inf")
        if np.any(data <= 0):
            raise ValidationError("depth values must be strictly positive")
        z_min, z_max = (float(v) for v in self.valid_range)
        if not (z_min > 0 and z_max > z_min):
            raise ValidationError(f"depth range must satisfy 0 < z_min < z_max, got [{z_min}, {z_max}]")
        object.__setattr__(self, "data", readonly_array(data))
        object.__setattr__(self, "valid_range", (z_min, z_max))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CameraConfig:
    """Thin-lens camera parameters plus kernel discretization limits.

    min_blur_radius_px clips tiny blur radii to zero so near-focus kernels
    collapse to the discrete delta; max_kernel_size caps the kernel support
    and must be odd.
    """

    focal_length_m: float
    aperture_diameter_m: float
    pixel_size_m: float
    min_blur_radius_px: float = 0.0
    max_kernel_size: int = 17

    def __post_init__(self):
        if self.focal_length_m <= 0:
            raise ValidationError("focal length must be positive")
        if self.aperture_diameter_m <= 0:
            raise ValidationError("aperture diameter must be positive")
        if self.pixel_size_m <= 0:
            raise ValidationError("pixel size must be positive")
        if self.min_blur_radius_px < 0:
            raise ValidationError("minimum blur radius must be nonnegative")
        k = self.max_kernel_size
        if not (isinstance(k, (int, np.integer)) and k >= 1 and k % 2 == 1):
            raise ValidationError(f"max kernel size must be an odd positive integer, got {k}")


@dataclass(frozen=True, eq=False)
class FocalStack:
    """Ordered frames of one scene at strictly increasing focus distances."""

    frames: tuple[Image, ...]
    focus_distances: tuple[float, ...]
    camera: CameraConfig

    def __post_init__(self):
        frames = tuple(self.frames)
        zf = tuple(float(z) for z in self.focus_distances)
        if len(frames) < 2:
            raise ValidationError(f"focal stack needs at least 2 frames, got {len(frames)}")
        if len(frames) != len(zf):
            raise ValidationError("number of frames and focus distances differ")
        ref = frames[0]
        for idx, frame in enumerate(frames):
            if frame.data.shape != ref.data.shape:
                raise ValidationError(
                    f"frame {idx} shape {frame.data.shape} differs from frame 0 shape {ref.data.shape}"
                )
            if frame.intensity_range != ref.intensity_range:
                raise ValidationError(f"frame {idx} intensity range differs from frame 0")
        if any(z <= 0 for z in zf):
            raise ValidationError("focus distances must be strictly positive")
        if any(b <= a for a, b in zip(zf, zf[1:])):
            raise ValidationError(f"focus distances must be strictly increasing, got {zf}")
        if zf[0] <= self.camera.focal_length_m:
            raise ValidationError(
                f"focus distances must exceed the focal length {self.camera.focal_length_m} m"
            )
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "focus_distances", zf)

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def channels(self) -> int:
        return self.frames[0].channels

    @property
    def intensity_range(self) -> tuple[float, float]:
        return self.frames[0].intensity_range

    def frame_arrays(self) -> list[np.ndarray]:
        """Frame data as a list of (m, n, C) read-only arrays."""
        return [frame.data for frame in self.frames]
