"""Uncertainty-aware scene representation networks for scalar volumes.

Trains multi-decoder feature-grid networks on volumetric data, estimates
per-coordinate predictive variance from decoder disagreement, optionally
regularizes that variance toward the observed squared error, and renders
the result with uncertainty-aware direct volume rendering.
"""

from .encoders import EncoderSpec, build_encoder, hash_level_resolutions
from .kernels import BACKEND
from .metrics import (
    gaussian_nll,
    jaccard_spatial_tolerance,
    pearson_correlation,
    psnr,
    top_fraction_indices,
)
from .models import (
    LambdaSchedule,
    LossReport,
    MDSRNModel,
    PredictionStats,
    TrainConfig,
    TrainingDivergedError,
    UnsupportedModelError,
    build_model,
    density_normalize,
    ensemble_stats,
    lambda_at,
    member_loss,
    reconstruct_fields,
    train_model,
    variance_regularization_loss,
)
from .nn import LRSchedule, MLP, cosine_lr_at, finite_difference_check
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .render import (
    Camera,
    RenderConfig,
    TransferFunction,
    default_transfer_function,
    raymarch_mean,
    raymarch_statistical,
    render_scalar_overlay,
)
from .volume import (
    SyntheticSpec,
    TrainingBatch,
    VolumeGrid,
    load_raw_volume,
    make_synthetic_volume,
    normalize_volume,
    sample_trilinear,
    sample_training_batch,
    save_raw_volume,
    vertex_coordinates,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Camera",
    "CheckpointError",
    "EncoderSpec",
    "LRSchedule",
    "LambdaSchedule",
    "LossReport",
    "MDSRNModel",
    "MLP",
    "PredictionStats",
    "RenderConfig",
    "SyntheticSpec",
    "TrainConfig",
    "TrainingBatch",
    "TrainingDivergedError",
    "TransferFunction",
    "UnsupportedModelError",
    "VolumeGrid",
    "build_encoder",
    "build_model",
    "cosine_lr_at",
    "default_transfer_function",
    "density_normalize",
    "ensemble_stats",
    "finite_difference_check",
    "gaussian_nll",
    "hash_level_resolutions",
    "jaccard_spatial_tolerance",
    "lambda_at",
    "load_checkpoint",
    "load_raw_volume",
    "make_synthetic_volume",
    "member_loss",
    "normalize_volume",
    "pearson_correlation",
    "psnr",
    "raymarch_mean",
    "raymarch_statistical",
    "reconstruct_fields",
    "render_scalar_overlay",
    "sample_trilinear",
    "sample_training_batch",
    "save_checkpoint",
    "save_raw_volume",
    "top_fraction_indices",
    "train_model",
    "variance_regularization_loss",
    "vertex_coordinates",
    "__version__",
]
