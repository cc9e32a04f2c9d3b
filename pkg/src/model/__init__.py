"""The multi-task network: config, architecture, training and evaluation."""

from .models import Ablation, BsdaConfig, EpochRecord, HISTORY_COLUMNS, TrainState
from .network import BsdaModel, SegmentorOutput, forward_segmentor, fuse_and_classify
from .evaluation import EvaluationResult, Predictions, evaluate, predict, score_predictions
from .training import SegLossTerms, augment, joint_loss, seg_loss, train, write_history
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    # Config and records
    "Ablation",
    "BsdaConfig",
    "EpochRecord",
    "HISTORY_COLUMNS",
    "TrainState",
    # Network
    "BsdaModel",
    "SegmentorOutput",
    "forward_segmentor",
    "fuse_and_classify",
    # Training
    "SegLossTerms",
    "seg_loss",
    "joint_loss",
    "augment",
    "train",
    "write_history",
    # Evaluation
    "Predictions",
    "EvaluationResult",
    "predict",
    "evaluate",
    "score_predictions",
    # Checkpoints
    "save_checkpoint",
    "load_checkpoint",
]
