from .losses import Batch, LossWeights, loss_and_grad, regression_loss, siamese_differential_loss
from .model import LearnedController, Regressor, load_checkpoint, save_checkpoint
from .train import (
    Adam, PerturbationSchedule, TrainConfig, TrainingDiverged, evaluate, init_regressor, make_batch, train,
)

__all__ = [
    "Batch", "LossWeights", "loss_and_grad", "regression_loss", "siamese_differential_loss",
    "LearnedController", "Regressor", "load_checkpoint", "save_checkpoint",
    "Adam", "PerturbationSchedule", "TrainConfig", "TrainingDiverged", "evaluate", "init_regressor",
    "make_batch", "train",
]
