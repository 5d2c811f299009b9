"""Multi-task learning with hard, cross-stitch and learned weight sharing."""

from .arch import BackboneConfig, CrossStitchUnit, LayerSpec, MtlNetwork, build_network, cross_stitch_forward, mtl_forward
from .autodiff import BACKEND
from .data import MultiTaskDataset, SyntheticTaskSpec, TaskDataset, gen_synthetic_pair, load_csv
from .losses import Combiner
from .lws import AssignmentDistribution, inference_assignment, lws_weight_update, nes_update, sample_assignment, utilities
from .metrics import MetricsRecord, cumulative_accuracy, write_metrics
from .trainer import TrainConfig, build_state, evaluate_task, run_training

__version__ = "0.1.0"

__all__ = [
    "AssignmentDistribution", "BACKEND", "BackboneConfig", "Combiner", "CrossStitchUnit", "LayerSpec",
    "MetricsRecord", "MtlNetwork", "MultiTaskDataset", "SyntheticTaskSpec", "TaskDataset", "TrainConfig",
    "build_network", "build_state", "cross_stitch_forward", "cumulative_accuracy", "evaluate_task",
    "gen_synthetic_pair", "inference_assignment", "load_csv", "lws_weight_update", "mtl_forward",
    "nes_update", "run_training", "sample_assignment", "utilities", "write_metrics",
]
