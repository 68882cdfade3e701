"""Domain type invariants: shapes, ranges, immutability, error taxonomy."""

import numpy as np
import pytest

from dfdstack import (
    CameraConfig,
    DegenerateOperatorError,
    DepthMap,
    EvaluationError,
    FocalStack,
    FormatError,
    Image,
    ValidationError,
)
from dfdstack.core import readonly_array

from conftest import make_camera


def test_error_taxonomy():
    assert issubclass(ValidationError, ValueError)
    assert issubclass(FormatError, ValidationError)
    assert issubclass(EvaluationError, ValidationError)
    assert issubclass(DegenerateOperatorError, RuntimeError)


def test_readonly_array_copies_writable_input():
    src = np.zeros((3, 3))
    frozen = readonly_array(src)
    assert not frozen.flags.writeable
    # the caller's array must stay writable
    src[0, 0] = 1.0
    assert frozen[0, 0] == 0.0


def test_readonly_array_passes_through_frozen_input():
    src = np.zeros((3, 3))
    src.setflags(write=False)
    assert readonly_array(src) is src


def test_image_promotes_2d_to_single_channel():
    img = Image(np.zeros((4, 5)))
    assert img.data.shape == (4, 5, 1)
    assert img.channels == 1
    assert img.height == 4 and img.width == 5


def test_image_accepts_three_channels():
    img = Image(np.zeros((4, 5, 3)))
    assert img.channels == 3


def test_image_rejects_bad_channel_count():
    with pytest.raises(ValidationError):
        Image(np.zeros((4, 5, 2)))


def test_image_rejects_non_finite():
    data = np.zeros((3, 3))
    data[1, 1] = np.nan
    with pytest.raises(ValidationError):
        Image(data)


def test_image_rejects_degenerate_range():
    with pytest.raises(ValidationError):
        Image(np.zeros((3, 3)), intensity_range=(1.0, 1.0))


def test_image_data_is_immutable():
    img = Image(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1.0


def test_depth_map_rejects_nonpositive_values():
    data = np.ones((3, 3))
    data[2, 2] = 0.0
    with pytest.raises(ValidationError):
        DepthMap(data, valid_range=(0.5, 2.0))


def test_depth_map_rejects_bad_range():
    with pytest.raises(ValidationError):
        DepthMap(np.ones((3, 3)), valid_range=(0.0, 2.0))
    with pytest.raises(ValidationError):
        DepthMap(np.ones((3, 3)), valid_range=(2.0, 1.0))


def test_depth_map_rejects_3d():
    with pytest.raises(ValidationError):
        DepthMap(np.ones((3, 3, 1)), valid_range=(0.5, 2.0))


def test_depth_map_is_immutable():
    dm = DepthMap(np.ones((3, 3)), valid_range=(0.5, 2.0))
    with pytest.raises(ValueError):
        dm.data[0, 0] = 2.0


def test_camera_config_validation():
    with pytest.raises(ValidationError):
        CameraConfig(focal_length_m=0.0, aperture_diameter_m=0.01, pixel_size_m=1e-5)
    with pytest.raises(ValidationError):
        CameraConfig(focal_length_m=0.05, aperture_diameter_m=-1, pixel_size_m=1e-5)
    with pytest.raises(ValidationError):
        CameraConfig(focal_length_m=0.05, aperture_diameter_m=0.01, pixel_size_m=1e-5, max_kernel_size=4)
    with pytest.raises(ValidationError):
        CameraConfig(focal_length_m=0.05, aperture_diameter_m=0.01, pixel_size_m=1e-5, min_blur_radius_px=-0.1)


def _frames(n, shape=(4, 4, 1), rng=None):
    rng = rng or np.random.default_rng(0)
    return [Image(rng.uniform(0.0, 1.0, shape)) for _ in range(n)]


def test_focal_stack_needs_two_frames():
    camera = make_camera()
    with pytest.raises(ValidationError):
        FocalStack(frames=_frames(1), focus_distances=(1.0,), camera=camera)


def test_focal_stack_focus_must_increase():
    camera = make_camera()
    with pytest.raises(ValidationError):
        FocalStack(frames=_frames(2), focus_distances=(2.0, 1.0), camera=camera)
    with pytest.raises(ValidationError):
        FocalStack(frames=_frames(2), focus_distances=(1.0, 1.0), camera=camera)


def test_focal_stack_focus_beyond_focal_length():
    camera = make_camera(focal_length_m=0.05)
    with pytest.raises(ValidationError):
        FocalStack(frames=_frames(2), focus_distances=(0.04, 1.0), camera=camera)


def test_focal_stack_uniform_shapes():
    camera = make_camera()
    frames = _frames(2)
    frames.append(Image(np.zeros((5, 4, 1))))
    with pytest.raises(ValidationError):
        FocalStack(frames=frames, focus_distances=(1.0, 2.0, 3.0), camera=camera)


def test_focal_stack_uniform_intensity_range():
    camera = make_camera()
    frames = _frames(2)
    frames.append(Image(np.zeros((4, 4, 1)), intensity_range=(0.0, 2.0)))
    with pytest.raises(ValidationError):
        FocalStack(frames=frames, focus_distances=(1.0, 2.0, 3.0), camera=camera)


def test_focal_stack_accessors():
    camera = make_camera()
    stack = FocalStack(frames=_frames(3), focus_distances=(1.0, 2.0, 3.0), camera=camera)
    assert stack.num_frames == 3
    assert stack.height == 4 and stack.width == 4 and stack.channels == 1
    assert stack.intensity_range == (0.0, 1.0)
    arrays = stack.frame_arrays()
    assert len(arrays) == 3
    assert all(a.shape == (4, 4, 1) for a in arrays)
