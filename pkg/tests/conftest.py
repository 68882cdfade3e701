"""Shared helpers for the test suite.

Synthetic scenes are built from seeded RNGs so every run is reproducible.
The sigma helpers recompute the thin-lens geometry from scratch (rather
than calling the package) so optics tests have an independent reference.
"""

import numpy as np
import pytest

from dfdstack import CameraConfig, DepthMap, FocalStack, Image, render_focal_stack


def make_camera(
    focal_length_m=0.05,
    aperture_diameter_m=0.00625,
    pixel_size_m=1.2e-5,
    min_blur_radius_px=0.0,
    max_kernel_size=17,
) -> CameraConfig:
    return CameraConfig(
        focal_length_m=focal_length_m,
        aperture_diameter_m=aperture_diameter_m,
        pixel_size_m=pixel_size_m,
        min_blur_radius_px=min_blur_radius_px,
        max_kernel_size=max_kernel_size,
    )


def sigma_scale(camera: CameraConfig, focus_distance: float) -> float:
    """c such that sigma(z) = c * |z - Z_f| / z, derived by hand."""
    f = camera.focal_length_m
    return camera.aperture_diameter_m * f / ((focus_distance - f) * 2.0 * camera.pixel_size_m)


def sigma_for(camera: CameraConfig, focus_distance: float, z: float) -> float:
    """Independent reference for the blur sigma at scene depth z."""
    return sigma_scale(camera, focus_distance) * abs(z - focus_distance) / z


def depth_for_sigma(camera: CameraConfig, focus_distance: float, sigma: float) -> float:
    """Near-side depth producing the requested sigma (inverts sigma_for)."""
    c = sigma_scale(camera, focus_distance)
    return focus_distance / (1.0 + sigma / c)


def textured_image(height: int, width: int, channels: int = 1, seed: int = 0) -> Image:
    rng = np.random.default_rng(seed)
    data = rng.uniform(0.1, 0.9, size=(height, width, channels))
    return Image(data, intensity_range=(0.0, 1.0))


def ramp_depth(height: int, width: int, z_min: float, z_max: float, margin: float = 0.0) -> DepthMap:
    lo = z_min + margin * (z_max - z_min)
    hi = z_max - margin * (z_max - z_min)
    cols = np.linspace(lo, hi, width)
    data = np.tile(cols, (height, 1))
    return DepthMap(data, valid_range=(z_min, z_max))


def constant_depth(height: int, width: int, z: float, valid_range=None) -> DepthMap:
    if valid_range is None:
        valid_range = (z * 0.5, z * 2.0)
    return DepthMap(np.full((height, width), z), valid_range=valid_range)


def small_stack(seed: int = 0, height: int = 12, width: int = 12, channels: int = 1) -> FocalStack:
    """A tiny rendered stack with mid-range blur, for plumbing tests."""
    camera = make_camera(min_blur_radius_px=0.5)
    aif = textured_image(height, width, channels, seed=seed)
    depth = ramp_depth(height, width, 1.0, 6.0, margin=0.1)
    return render_focal_stack(aif, depth, camera, (1.0, 1.5, 2.5, 4.0, 6.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
