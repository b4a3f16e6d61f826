from .model import (
    BiLstmParams,
    DenseParams,
    LstmDirectionParams,
    ModelConfig,
    ModelParams,
    init_params,
    lstm_forward,
    lstm_backward,
    bilstm_forward,
    bilstm_backward,
    model_backward,
    model_forward,
    mse_loss,
    zeros_params,
)
from .optim import AdamState, adam_init, adam_step
from .gradcheck import grad_check
from .train import TrainConfig, TrainHistory, evaluate_mse, train_model
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .estimator import ContourRegressor, predict_contours

__all__ = [
    "AdamState",
    "BiLstmParams",
    "Checkpoint",
    "ContourRegressor",
    "DenseParams",
    "LstmDirectionParams",
    "ModelConfig",
    "ModelParams",
    "TrainConfig",
    "TrainHistory",
    "adam_init",
    "adam_step",
    "bilstm_backward",
    "bilstm_forward",
    "evaluate_mse",
    "grad_check",
    "init_params",
    "load_checkpoint",
    "lstm_backward",
    "lstm_forward",
    "model_backward",
    "model_forward",
    "mse_loss",
    "predict_contours",
    "save_checkpoint",
    "train_model",
    "zeros_params",
]
