"""
Trainer
Adam, adaptive density control and the reconstruction training loop
"""

from core.training.adam import AdamState, adam_step
from core.training.density import DensityResult, DensityStats, densify_and_prune
from core.training.evaluate import evaluate
from core.training.reconstruction import Reconstruction, parameter_group
from core.training.trainer import Trainer, TrainReport, learning_rate, position_lr, train
from core.training.views import TrainingView, ViewSampler, check_views

__all__ = [
    "AdamState",
    "DensityResult",
    "DensityStats",
    "Reconstruction",
    "TrainReport",
    "Trainer",
    "TrainingView",
    "ViewSampler",
    "adam_step",
    "check_views",
    "densify_and_prune",
    "evaluate",
    "learning_rate",
    "parameter_group",
    "position_lr",
    "train",
]
