"""occfit: watertight surface reconstruction from a single sparse,
noisy, unoriented point cloud.

A two-logit coordinate MLP is fitted as a binary occupancy field: noisy
queries are projected onto the decision boundary with a Newton root step
and pulled toward their nearest input points, while an entropy term
polarizes free space and keeps the surface itself maximally uncertain.
The zero level set of the resulting margin is extracted with marching
cubes and scored against ground truth with standard sample-based
metrics.
"""

from .cloud import Normalization, PointCloud, load_cloud, normalize
from .config import RunConfig, canonical, load_config, parse_config
from .diffnet import NetworkConfig
from .errors import (CheckpointFormatError, ConfigError,
                     DegenerateGradientError, DegenerateInputError,
                     NumericError, OccfitError, ParseError,
                     TrainingStallError)
from .field import InitConfig, OccupancyField, geometric_init, margin, newton_step
from .mesher import GridSpec, TriangleMesh, extract, load_mesh, write_mesh
from .metrics import MetricReport, evaluate_meshes, sample_mesh
from .objective import LossBreakdown, ScheduleConfig, lambda_at, total_loss
from .trainer import (AdamConfig, Checkpoint, TrainerConfig, fit,
                      load_checkpoint, save_checkpoint)

__version__ = "0.1.0"

__all__ = [
    "AdamConfig", "Checkpoint", "CheckpointFormatError", "ConfigError",
    "DegenerateGradientError", "DegenerateInputError", "GridSpec",
    "InitConfig", "LossBreakdown", "MetricReport", "NetworkConfig",
    "Normalization", "NumericError", "OccfitError", "OccupancyField",
    "ParseError", "PointCloud", "RunConfig", "ScheduleConfig",
    "TrainerConfig", "TrainingStallError", "TriangleMesh", "canonical",
    "evaluate_meshes", "extract", "fit", "geometric_init", "lambda_at",
    "load_checkpoint", "load_cloud", "load_config", "load_mesh", "margin",
    "newton_step", "normalize", "parse_config", "sample_mesh",
    "save_checkpoint", "total_loss", "write_mesh", "__version__",
]
