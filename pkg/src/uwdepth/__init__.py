"""Deterministic underwater depth-estimation pipeline.

View-synthesis photometric losses, anomaly/auto/consistency masking,
physics-based underwater enhancement, rotation geometry for distillation,
dataset splitting, and depth metrics; all network-free and verified against
synthetic oracles.

Every operation is a pure function of immutable inputs and safe to call
concurrently; the one stateful piece, the anomaly-threshold EMA, is updated
functionally (TgamState in, TgamState out) under a single-writer contract.
"""

from .errors import (DegenerateInputError, EstimationError, FileFormatError,
                     GeometryError, OptimizationError, ParameterError,
                     PipelineError)
from .imaging import (BlurConfig, CoordField, DepthMap, Image, Mask,
                      bilinear_sample, gaussian_blur, gaussian_kernel,
                      image_gradients, normalize_depth, percentile)
from .geometry import (Intrinsics, PointMap, Pose, RotationSpec,
                       backproject_points, crop_dims, reproject,
                       rotate_center_crop, rotate_center_crop_depth,
                       synthesize_view)
from .losses import (DistillConfig, DistillationLoss, LossConfig, LossMap,
                     distillation_loss, min_reprojection_loss, pearson_loss,
                     pearson_loss_grad, photometric_error,
                     photometric_error_grad, smoothness_loss, ssim_map)
from .masking import (TgamState, auto_mask, consistency_mask,
                      consistency_mask_multi, tgam_mask, tgam_update)
from .enhancement import (SharpenConfig, WaterModel, degrade,
                          depth_weighted_sharpen, enhance,
                          estimate_attenuation, estimate_backscatter,
                          estimate_water_model, restore)
from .evaluation import MetricReport, depth_metrics, median_scale
from .dataset import (Frame, Scene, Split, generate_ouc_split, load_split_file,
                      save_split, scan_scenes, triplet_eligible)
from .fitdepth import FitResult, fit_depth_demo
from .config import PipelineConfig

__version__ = "0.1.0"

__all__ = [
    "PipelineError", "ParameterError", "GeometryError", "EstimationError",
    "DegenerateInputError", "OptimizationError", "FileFormatError",
    "Image", "DepthMap", "Mask", "CoordField", "BlurConfig",
    "gaussian_blur", "gaussian_kernel", "image_gradients", "percentile",
    "bilinear_sample", "normalize_depth",
    "Intrinsics", "Pose", "PointMap", "RotationSpec",
    "reproject", "synthesize_view", "backproject_points", "crop_dims",
    "rotate_center_crop", "rotate_center_crop_depth",
    "LossConfig", "DistillConfig", "LossMap", "DistillationLoss",
    "ssim_map", "photometric_error", "photometric_error_grad",
    "min_reprojection_loss", "smoothness_loss", "distillation_loss",
    "pearson_loss", "pearson_loss_grad",
    "TgamState", "tgam_update", "tgam_mask", "auto_mask",
    "consistency_mask", "consistency_mask_multi",
    "WaterModel", "SharpenConfig", "estimate_backscatter",
    "estimate_attenuation", "estimate_water_model", "restore", "degrade",
    "depth_weighted_sharpen", "enhance",
    "MetricReport", "median_scale", "depth_metrics",
    "Frame", "Scene", "Split", "scan_scenes", "generate_ouc_split",
    "triplet_eligible", "save_split", "load_split_file",
    "FitResult", "fit_depth_demo", "PipelineConfig",
]
