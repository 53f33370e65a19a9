"""Masked autoencoder for transient completion and downstream inference."""

from .config import MaeConfig, gradcheck_config, paper_config, tiny_config
from .gradcheck import check_gradients
from .model import GradientError, MaeModel, parameter_count, parameter_shapes
from .optim import OptimizerState, adamw_step, lr_at_step
from .train import TrainingDivergedError, TrainLog, finetune_head, load_training_volumes, train

__all__ = [
    "MaeConfig", "MaeModel", "OptimizerState", "TrainLog",
    "GradientError", "TrainingDivergedError",
    "tiny_config", "paper_config", "gradcheck_config",
    "parameter_shapes", "parameter_count",
    "adamw_step", "lr_at_step", "check_gradients",
    "train", "finetune_head", "load_training_volumes",
]
