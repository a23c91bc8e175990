"""Minimal dense/convolutional network core with reverse-mode gradients.

Pure numpy, float64 throughout. Models are immutable after training and
safe for concurrent read-only use.
"""

from ecgaudit.nn.model import (
    LayerSpec,
    ModelSpec,
    TrainedModel,
    ForwardTrace,
    ShapeError,
    build_model,
    lenet_spec,
    resnet_spec,
    forward,
    input_gradient,
    layer_gradient,
    fold_batchnorm,
    min_input_length,
)
from ecgaudit.nn.training import TrainConfig, TrainData, train
from ecgaudit.nn.metrics import MetricsReport, evaluate, auc_score
from ecgaudit.nn.checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "LayerSpec",
    "ModelSpec",
    "TrainedModel",
    "ForwardTrace",
    "ShapeError",
    "build_model",
    "lenet_spec",
    "resnet_spec",
    "forward",
    "input_gradient",
    "layer_gradient",
    "fold_batchnorm",
    "min_input_length",
    "TrainConfig",
    "TrainData",
    "train",
    "MetricsReport",
    "evaluate",
    "auc_score",
    "save_checkpoint",
    "load_checkpoint",
]
