"""Depth from defocus over focal stacks, by direct alternating minimization."""

from .aif_step import (
    FistaConfig,
    OperatorStack,
    build_operator_stack,
    estimate_lipschitz,
    fista_solve,
    stack_objective,
)
from .core import (
    CameraConfig,
    DegenerateOperatorError,
    DepthMap,
    EvaluationError,
    FocalStack,
    FormatError,
    Image,
    ValidationError,
)
from .depth_step import (
    DepthStepConfig,
    GridSearchResult,
    error_map,
    golden_section_refine,
    grid_search,
    merge_best,
    refine_depth,
    windowed_error,
)
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
from .metrics import EvalReport, abs_rel, delta_accuracy, evaluate_make3d, evaluate_pair, rmse
from .optics import (
    BlurKernel,
    BlurStack,
    SparseOperator,
    apply_operator,
    blur_diameter,
    blur_sigma_px,
    build_blur_stack,
    build_sparse_operator,
    convolve_kernel,
    gaussian_kernel,
    render_focal_stack,
)
from .pipeline import (
    CAMERA_PRESET_NAMES,
    PRESET_NAMES,
    ReconstructionResult,
    SolverConfig,
    TracePoint,
    camera_preset,
    candidate_grid,
    preset_config,
    reconstruct,
    schedule_iters,
)
from .postprocess import artifact_mask, inpaint_mean, local_tv_map
from .stitch import StitchConfig, sharpness_map, stitch_aif

__version__ = "0.1.0"

__all__ = [
    "BlurKernel",
    "BlurStack",
    "CameraConfig",
    "CAMERA_PRESET_NAMES",
    "DegenerateOperatorError",
    "DepthMap",
    "DepthStepConfig",
    "EvalReport",
    "EvaluationError",
    "FistaConfig",
    "FocalStack",
    "FormatError",
    "GridSearchResult",
    "Image",
    "OperatorStack",
    "PRESET_NAMES",
    "ReconstructionResult",
    "SolverConfig",
    "SparseOperator",
    "StackManifest",
    "StitchConfig",
    "TracePoint",
    "ValidationError",
    "abs_rel",
    "apply_operator",
    "artifact_mask",
    "blur_diameter",
    "blur_sigma_px",
    "build_blur_stack",
    "build_operator_stack",
    "build_sparse_operator",
    "camera_preset",
    "candidate_grid",
    "convolve_kernel",
    "delta_accuracy",
    "error_map",
    "estimate_lipschitz",
    "evaluate_make3d",
    "evaluate_pair",
    "fista_solve",
    "gaussian_kernel",
    "golden_section_refine",
    "grid_search",
    "inpaint_mean",
    "load_depth",
    "load_image",
    "load_manifest",
    "load_stack",
    "local_tv_map",
    "merge_best",
    "preset_config",
    "reconstruct",
    "refine_depth",
    "render_focal_stack",
    "rmse",
    "save_depth",
    "save_depth_preview",
    "save_image",
    "save_manifest",
    "schedule_iters",
    "sharpness_map",
    "stack_objective",
    "stitch_aif",
    "windowed_error",
]
