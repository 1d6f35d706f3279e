from .layers import (
    DenseParams,
    EmbeddingParams,
    LstmParams,
    LstmState,
    cross_entropy,
    loss_regression,
    lstm_backward,
    lstm_forward,
    lstm_step,
    one_hot,
    sigmoid,
    softmax,
)
from .networks import ClassifierNet, RegressorNet, forward_classifier, forward_regressor
from .optim import Optimizer, OptimizerConfig, clip_by_global_norm, optimizer_step

__all__ = [
    "ClassifierNet",
    "DenseParams",
    "EmbeddingParams",
    "LstmParams",
    "LstmState",
    "Optimizer",
    "OptimizerConfig",
    "RegressorNet",
    "clip_by_global_norm",
    "cross_entropy",
    "forward_classifier",
    "forward_regressor",
    "loss_regression",
    "lstm_backward",
    "lstm_forward",
    "lstm_step",
    "one_hot",
    "optimizer_step",
    "sigmoid",
    "softmax",
]
