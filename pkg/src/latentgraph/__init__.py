"""Latent-graph classification of 3D medical image encodings.

Turns per-subject stacks of slice-level feature vectors (64 x 1152) into
subject-level graphs, classifies them with GraphSAGE / GAT heads or a
conditional-MLP baseline, and provides the training, sweep, and robustness
harness around them.
"""

from .errors import (ConfigError, DataError, FormatError, GraphError,
                     LatentGraphError, MetricError, TrainingError)
from .graphs import (EdgeSet, SubjectGraph, TopologySpec, build_knn_topology,
                     build_slice_topology, build_topology, pairwise_distance,
                     validate_graph)
from .metrics import EvalBatch, accuracy, auroc, binary_auroc, macro_auroc
from .models import ModelConfig, build_head, count_parameters
from .nn import LrSchedule, Parameter, Tensor, lr_at_epoch, sgd_step
from .training import RunResult, Splits, TrainConfig, repeat_runs, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "FormatError", "GraphError", "LatentGraphError",
    "MetricError", "TrainingError",
    "EdgeSet", "SubjectGraph", "TopologySpec", "build_knn_topology",
    "build_slice_topology", "build_topology", "pairwise_distance", "validate_graph",
    "EvalBatch", "accuracy", "auroc", "binary_auroc", "macro_auroc",
    "ModelConfig", "build_head", "count_parameters",
    "LrSchedule", "Parameter", "Tensor", "lr_at_epoch", "sgd_step",
    "RunResult", "Splits", "TrainConfig", "repeat_runs", "train",
    "__version__",
]
