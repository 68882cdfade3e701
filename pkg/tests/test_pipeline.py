"""Iteration schedule, presets, config round trips, and the alternating solver."""

import json

import numpy as np
import pytest

from dfdstack import (
    DepthMap,
    DepthStepConfig,
    FocalStack,
    SolverConfig,
    ValidationError,
    build_operator_stack,
    camera_preset,
    candidate_grid,
    preset_config,
    reconstruct,
    render_focal_stack,
    schedule_iters,
    stack_objective,
)
from dfdstack.pipeline import CAMERA_PRESET_NAMES, PRESET_NAMES

from conftest import constant_depth, make_camera, textured_image


# -- iteration schedule -----------------------------------------------------------


def test_schedule_geometric_growth():
    assert schedule_iters(10, 2.0, 0) == 10
    assert schedule_iters(10, 2.0, 3) == 80


def test_schedule_flat_when_alpha_one():
    for epoch in range(6):
        assert schedule_iters(7, 1.0, epoch) == 7


def test_schedule_rounds_half_up():
    # 200 * 1.05^2 = 220.5
    assert schedule_iters(200, 1.05, 2) == 221


def test_schedule_floor_of_one():
    assert schedule_iters(1, 0.1, 3) == 1


def test_schedule_validation():
    with pytest.raises(ValidationError):
        schedule_iters(0, 2.0, 1)
    with pytest.raises(ValidationError):
        schedule_iters(10, 0.0, 1)
    with pytest.raises(ValidationError):
        schedule_iters(10, 2.0, -1)


# -- candidate grids ---------------------------------------------------------------


def test_linear_grid_endpoints_and_spacing():
    grid = candidate_grid((0.5, 4.5), 9)
    assert grid[0] == 0.5 and grid[-1] == 4.5
    assert np.allclose(np.diff(grid), 0.5)
    assert np.all(np.diff(grid) > 0)


def test_inverse_grid_denser_near_small_depths():
    grid = candidate_grid((1.0, 10.0), 10, inverse=True)
    assert grid[0] == pytest.approx(1.0, rel=1e-12)
    assert grid[-1] == pytest.approx(10.0, rel=1e-12)
    assert np.all(np.diff(grid) > 0)
    assert grid[1] - grid[0] < grid[-1] - grid[-2]


def test_grid_validation():
    with pytest.raises(ValidationError):
        candidate_grid((2.0, 1.0), 5)
    with pytest.raises(ValidationError):
        candidate_grid((1.0, 2.0), 1)


# -- presets -----------------------------------------------------------------------


def test_preset_names_sorted():
    assert PRESET_NAMES == ("fast", "make3d", "mobile", "nyuv2-accurate")
    assert CAMERA_PRESET_NAMES == ("nyuv2",)


def test_fast_preset_values():
    cfg = preset_config("fast")
    assert cfg.preset == "fast"
    assert (cfg.epochs, cfg.t0, cfg.alpha) == (5, 10, 2.0)
    assert cfg.depth_range == (0.1, 10.0)
    assert cfg.depth.grid_samples == 100
    assert cfg.depth.window_size == 1
    assert cfg.min_blur_radius_px == 2.0


def test_accurate_preset_values():
    cfg = preset_config("nyuv2-accurate")
    assert (cfg.epochs, cfg.t0, cfg.alpha) == (40, 200, 1.05)
    assert cfg.depth.window_size == 1


def test_outdoor_preset_values():
    cfg = preset_config("make3d")
    assert cfg.depth_range == (0.01, 80.0)
    assert cfg.depth.window_size == 5
    assert cfg.min_blur_radius_px == 0.5


def test_mobile_preset_values():
    cfg = preset_config("mobile")
    assert cfg.depth_range == (1.0, 800.0)
    assert cfg.depth.grid_samples == 200
    assert cfg.depth.window_size == 50
    assert cfg.min_blur_radius_px == 0.1


def test_unknown_preset_rejected():
    with pytest.raises(ValidationError):
        preset_config("fastest")


def test_camera_preset_values():
    camera, focus = camera_preset("nyuv2")
    assert camera.focal_length_m == 0.05
    assert camera.aperture_diameter_m == 0.00625
    assert camera.pixel_size_m == 1.2e-5
    assert camera.min_blur_radius_px == 2.0
    assert camera.max_kernel_size == 17
    assert focus == (1.0, 1.5, 2.5, 4.0, 6.0)
    with pytest.raises(ValidationError):
        camera_preset("kinect")


# -- config serialization ------------------------------------------------------------


def test_config_json_round_trip():
    for name in PRESET_NAMES:
        cfg = preset_config(name)
        decoded = SolverConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert decoded == cfg


def test_config_round_trip_keeps_custom_fields():
    cfg = SolverConfig(
        epochs=3,
        t0=17,
        alpha=1.31,
        depth_range=(0.25, 7.5),
        depth=DepthStepConfig(grid_samples=42, window_size=3, refine_bracket=0.5),
        renormalize_boundary=True,
        max_kernel_size=9,
    )
    assert SolverConfig.from_dict(cfg.to_dict()) == cfg


def test_config_from_dict_warns_on_unknown_key(caplog):
    raw = preset_config("fast").to_dict()
    raw["warp_drive"] = True
    with caplog.at_level("WARNING"):
        SolverConfig.from_dict(raw)
    assert any("warp_drive" in rec.message for rec in caplog.records)


def test_config_from_dict_rejects_malformed_sections():
    raw = preset_config("fast").to_dict()
    raw["depth"] = {"grid_samples": 50, "cleverness": 11}
    with pytest.raises(ValidationError):
        SolverConfig.from_dict(raw)
    with pytest.raises(ValidationError):
        SolverConfig.from_dict("not a dict")


def test_solver_config_validation():
    with pytest.raises(ValidationError):
        SolverConfig(epochs=0)
    with pytest.raises(ValidationError):
        SolverConfig(t0=0)
    with pytest.raises(ValidationError):
        SolverConfig(alpha=0.0)
    # the schedule floor tolerates shrinking budgets, the solver does not
    with pytest.raises(ValidationError):
        SolverConfig(alpha=0.9)
    with pytest.raises(ValidationError):
        SolverConfig(depth_range=(2.0, 1.0))


# -- end-to-end solver ----------------------------------------------------------------


def _scene_stack(z_true=1.5, side=16, seed=3):
    camera = make_camera(min_blur_radius_px=2.0, max_kernel_size=9)
    aif = textured_image(side, side, seed=seed)
    depth = constant_depth(side, side, z_true, valid_range=(0.5, 8.0))
    return render_focal_stack(aif, depth, camera, (1.0, 1.5, 2.5))


def _small_config(**kwargs):
    defaults = dict(
        epochs=3,
        t0=5,
        alpha=2.0,
        depth_range=(0.5, 8.0),
        depth=DepthStepConfig(grid_samples=30, window_size=1),
    )
    defaults.update(kwargs)
    return SolverConfig(**defaults)


def test_reconstruct_trace_is_non_increasing():
    stack = _scene_stack()
    result = reconstruct(stack, _small_config())
    losses = [pt.loss for pt in result.loss_trace]
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    assert all(np.isfinite(losses))


def test_reconstruct_trace_structure():
    stack = _scene_stack()
    result = reconstruct(stack, _small_config())
    assert len(result.loss_trace) == 2 * result.epochs_run
    for e in range(result.epochs_run):
        half, full = result.loss_trace[2 * e], result.loss_trace[2 * e + 1]
        assert (half.phase, half.epoch) == ("depth", e)
        assert (full.phase, full.epoch) == ("aif", e)
        assert 0.0 <= half.elapsed_s <= full.elapsed_s


def test_reconstruct_final_loss_matches_returned_pair():
    stack = _scene_stack()
    result = reconstruct(stack, _small_config())
    ops = build_operator_stack(result.depth, stack.camera, stack.focus_distances)
    assert result.final_loss == stack_objective(ops, result.aif, stack)


def test_reconstruct_is_deterministic():
    stack = _scene_stack()
    config = _small_config()
    a = reconstruct(stack, config)
    b = reconstruct(stack, config)
    assert np.array_equal(a.depth.data, b.depth.data)
    assert np.array_equal(a.aif.data, b.aif.data)
    assert np.array_equal(a.labels, b.labels)
    assert [pt.loss for pt in a.loss_trace] == [pt.loss for pt in b.loss_trace]


def test_reconstruct_plateau_stops_early():
    # delta kernels at every depth make the model depth-free, so the loss
    # freezes and the two-epoch plateau rule fires
    camera = make_camera(min_blur_radius_px=100.0)
    aif = textured_image(8, 8, seed=2)
    depth = constant_depth(8, 8, 2.0, valid_range=(0.5, 8.0))
    stack = render_focal_stack(aif, depth, camera, (1.0, 2.0))
    config = _small_config(epochs=10, t0=20)
    result = reconstruct(stack, config)
    assert result.epochs_run < 10


def test_reconstruct_recovers_uniform_depth_on_texture():
    z_true = 1.5  # lies on the 31-point grid over [0.5, 8.0]
    stack = _scene_stack(z_true=z_true)
    cands = candidate_grid((0.5, 8.0), 31)
    assert np.min(np.abs(cands - z_true)) < 1e-12
    config = _small_config(depth=DepthStepConfig(grid_samples=31, window_size=1))
    result = reconstruct(stack, config)
    spacing = cands[1] - cands[0]
    assert float(np.median(np.abs(result.depth.data - z_true))) <= spacing


def test_reconstruct_labels_shape_and_range():
    stack = _scene_stack()
    result = reconstruct(stack, _small_config())
    assert result.labels.shape == (stack.height, stack.width)
    assert result.labels.dtype == np.int64
    assert result.labels.min() >= 0 and result.labels.max() < stack.num_frames
    assert not result.labels.flags.writeable


def test_reconstruct_thread_validation():
    stack = _scene_stack()
    with pytest.raises(ValidationError):
        reconstruct(stack, _small_config(), threads=0)
