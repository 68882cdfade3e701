"""AIF update: least-squares deblurring across the stack with fixed depth.

Given per-frame blur operators A_k and observed frames j_k, the AIF solves

    min_x  f(x) = (1 / (K m n C)) * sum_k ||A_k x - j_k||^2

subject to a box constraint on intensities, by FISTA with per-iterate
projection. The step size is 1/L with L estimated by power iteration on
sum_k A_k^T A_k. The solver tracks the best feasible iterate by objective
value and returns it, so the objective never rises above the warm start's.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import CameraConfig, DegenerateOperatorError, DepthMap, Image, ValidationError
from .depth_step import _frame_arrays, _pixel_error
from .optics import SparseOperator, build_sparse_operator

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class OperatorStack:
    """One blur operator per focus setting, all on the same pixel grid."""

    operators: tuple[SparseOperator, ...]

    def __post_init__(self):
        ops = tuple(self.operators)
        if not ops:
            raise ValidationError("operator stack must hold at least one operator")
        shape = ops[0].grid_shape
        for idx, op in enumerate(ops):
            if op.grid_shape != shape:
                raise ValidationError(
                    f"operator {idx} grid {op.grid_shape} differs from operator 0 grid {shape}"
                )
        object.__setattr__(self, "operators", ops)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.operators[0].grid_shape

    @property
    def num_frames(self) -> int:
        return len(self.operators)

    @property
    def size(self) -> int:
        return self.operators[0].size


def build_operator_stack(
    depth: DepthMap,
    camera: CameraConfig,
    focus_distances,
    renormalize_boundary: bool = False,
) -> OperatorStack:
    return OperatorStack(
        operators=tuple(
            build_sparse_operator(depth, camera, zf, renormalize_boundary) for zf in focus_distances
        )
    )


@dataclass(frozen=True)
class FistaConfig:
    """Solver settings for the AIF update.

    clip_range of None defers to the warm start's intensity range.
    """

    max_iters: int = 100
    clip_range: tuple[float, float] | None = None
    power_iters: int = 50
    power_tol: float = 1e-4
    lipschitz_safety: float = 1.05

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValidationError("iteration count must be nonnegative")
        if self.clip_range is not None:
            lo, hi = (float(v) for v in self.clip_range)
            if not lo < hi:
                raise ValidationError(f"clip range must satisfy lo < hi, got [{lo}, {hi}]")
            object.__setattr__(self, "clip_range", (lo, hi))
        if self.power_iters < 1:
            raise ValidationError("power iteration count must be positive")
        if self.power_tol <= 0:
            raise ValidationError("power iteration tolerance must be positive")
        if self.lipschitz_safety < 1.0:
            raise ValidationError("Lipschitz safety factor must be at least 1")


def _gram_apply(ops: OperatorStack, vec: np.ndarray, transposes) -> np.ndarray:
    out = np.zeros_like(vec)
    for op, opt in zip(ops.operators, transposes):
        out += opt @ (op.matrix @ vec)
    return out


def estimate_lipschitz(ops: OperatorStack, config: FistaConfig, normalizer: float = 1.0) -> float:
    """Gradient Lipschitz constant of f: safety * 2 * lambda_max / normalizer,
    with lambda_max of sum_k A_k^T A_k estimated by power iteration.

    Starts from the normalized all-ones vector and stops when the Rayleigh
    quotient's relative change drops below power_tol. A stack with no
    spectral mass raises DegenerateOperatorError.
    """
    if normalizer <= 0:
        raise ValidationError("normalizer must be positive")
    mn = ops.size
    transposes = [op.matrix.T.tocsr() for op in ops.operators]
    v = np.full(mn, 1.0 / np.sqrt(mn))
    lam = 0.0
    for it in range(config.power_iters):
        w = _gram_apply(ops, v, transposes)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            raise DegenerateOperatorError("operator stack annihilates the start vector")
        lam_new = float(v @ w)
        v = w / norm
        if it > 0 and abs(lam_new - lam) <= config.power_tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    if lam <= 0.0:
        raise DegenerateOperatorError(f"estimated spectral bound {lam} is not positive")
    return config.lipschitz_safety * 2.0 * lam / normalizer


def _stack_objective_flat(ops: OperatorStack, x_flat: np.ndarray, obs: list[np.ndarray]) -> float:
    m, n = ops.grid_shape
    channels = obs[0].shape[2]
    pred = [(op.matrix @ x_flat).reshape(m, n, channels) for op in ops.operators]
    return float(np.mean(_pixel_error(pred, obs)))


def stack_objective(ops: OperatorStack, candidate: Image, observed) -> float:
    """Mean over pixels of the per-pixel stack error of a candidate AIF."""
    obs = _frame_arrays(observed)
    m, n = ops.grid_shape
    if len(obs) != ops.num_frames:
        raise ValidationError(
            f"operator stack has {ops.num_frames} frames, observed {len(obs)}"
        )
    if (candidate.height, candidate.width) != (m, n) or obs[0].shape[:2] != (m, n):
        raise ValidationError("candidate, operators, and observations must share a grid")
    return _stack_objective_flat(ops, candidate.data.reshape(m * n, candidate.channels), obs)


def fista_solve(
    ops: OperatorStack,
    observed,
    init: Image,
    config: FistaConfig,
    iters: int | None = None,
) -> Image:
    """Run projected FISTA from a warm start and return the best iterate.

    Every iterate is clipped to the box, momentum runs over the clipped
    points, and the returned image is the objective-best feasible iterate
    seen, the warm start included.
    """
    obs = _frame_arrays(observed)
    m, n = ops.grid_shape
    if len(obs) != ops.num_frames:
        raise ValidationError(f"operator stack has {ops.num_frames} frames, observed {len(obs)}")
    if obs[0].shape[:2] != (m, n) or (init.height, init.width) != (m, n):
        raise ValidationError("operators, observations, and warm start must share a grid")
    channels = obs[0].shape[2]
    if init.channels != channels:
        raise ValidationError(f"warm start has {init.channels} channels, observations {channels}")
    num_iters = config.max_iters if iters is None else int(iters)
    if num_iters < 0:
        raise ValidationError("iteration count must be nonnegative")
    lo, hi = config.clip_range if config.clip_range is not None else init.intensity_range

    mn = m * n
    obs_flat = [fr.reshape(mn, channels) for fr in obs]
    normalizer = float(ops.num_frames * mn * channels)
    lipschitz = estimate_lipschitz(ops, config, normalizer)
    step = 1.0 / lipschitz
    transposes = [op.matrix.T.tocsr() for op in ops.operators]

    x_init = init.data.reshape(mn, channels)
    best_x = x_init
    best_f = _stack_objective_flat(ops, x_init, obs)
    x = np.clip(x_init, lo, hi)
    if not np.array_equal(x, x_init):
        f_clipped = _stack_objective_flat(ops, x, obs)
        if f_clipped < best_f:
            best_x, best_f = x, f_clipped
    y = x
    t = 1.0
    for _ in range(num_iters):
        grad = np.zeros_like(y)
        for op, opt, j in zip(ops.operators, transposes, obs_flat):
            grad += opt @ (op.matrix @ y - j)
        grad *= 2.0 / normalizer
        x_new = np.clip(y - step * grad, lo, hi)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        f_new = _stack_objective_flat(ops, x, obs)
        if f_new < best_f:
            best_x, best_f = x, f_new
    log.debug("fista: %d iterations, step %.3e, best objective %.6e", num_iters, step, best_f)
    return Image(best_x.reshape(m, n, channels), intensity_range=init.intensity_range)
