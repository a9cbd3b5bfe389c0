from .model import NetworkConfig, ParameterSet, backward, batch_loss_and_grad, forward, init_params, predict
from .trainer import TrainConfig, train
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "NetworkConfig",
    "ParameterSet",
    "TrainConfig",
    "backward",
    "batch_loss_and_grad",
    "forward",
    "init_params",
    "load_checkpoint",
    "predict",
    "save_checkpoint",
    "train",
]
