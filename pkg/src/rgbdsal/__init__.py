"""RGB-D salient object detection on a from-scratch autodiff tensor core.

The public surface re-exported here is the working set: build a model
from a configuration, train it, checkpoint it, run it, and score what it
produces. Everything else (the tensor library, the layer zoo, the CLI
plumbing) stays importable from its own module.
"""

from .autodiff import NumericError, ShapeError, Tensor, no_grad
from .checkpoint import load_checkpoint, restore_model, save_checkpoint
from .complexity import CostReport, count_cost
from .config import RunConfig, UsageError, desk_config, load_config
from .data import DataError, PairFolder, read_labels, write_labels
from .fusion import FusionMode
from .losses import (
    LossReport,
    compute_losses,
    depth_quality_label,
    quality_gate,
    quality_label_from_mae,
)
from .metrics import (
    DatasetMetrics,
    ImageMetrics,
    evaluate_dataset,
    evaluate_image,
    mae,
    max_f_measure,
    e_measure,
    pr_curves,
    s_measure,
)
from .model import ModelOutput, SaliencyModel, build_model
from .training import StepRecord, epoch_mean_losses, synthetic_samples, train

__version__ = "0.1.0"

__all__ = [
    "CostReport",
    "DataError",
    "DatasetMetrics",
    "FusionMode",
    "ImageMetrics",
    "LossReport",
    "ModelOutput",
    "NumericError",
    "PairFolder",
    "RunConfig",
    "SaliencyModel",
    "ShapeError",
    "StepRecord",
    "Tensor",
    "UsageError",
    "build_model",
    "compute_losses",
    "count_cost",
    "depth_quality_label",
    "desk_config",
    "e_measure",
    "epoch_mean_losses",
    "evaluate_dataset",
    "evaluate_image",
    "load_checkpoint",
    "load_config",
    "mae",
    "max_f_measure",
    "no_grad",
    "pr_curves",
    "quality_gate",
    "quality_label_from_mae",
    "read_labels",
    "restore_model",
    "s_measure",
    "save_checkpoint",
    "synthetic_samples",
    "train",
    "write_labels",
    "__version__",
]
