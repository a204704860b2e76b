"""From-scratch regression networks: kernels, builders and training."""

from .layers import (
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    mse_loss,
    pool_backward,
    pool_forward,
    selu,
    sigmoid,
    tanh,
)
from .network import (
    NetSpec,
    Network,
    build_lenet5_baseline,
    build_multi_block_net,
    build_single_block_net,
    count_params,
    load_model,
    save_model,
)
from .training import History, TrainConfig, fit, frame_scores, train

__all__ = [
    "conv2d_forward",
    "conv2d_backward",
    "pool_forward",
    "pool_backward",
    "dense_forward",
    "dense_backward",
    "selu",
    "sigmoid",
    "tanh",
    "mse_loss",
    "NetSpec",
    "Network",
    "build_single_block_net",
    "build_multi_block_net",
    "build_lenet5_baseline",
    "count_params",
    "save_model",
    "load_model",
    "TrainConfig",
    "History",
    "fit",
    "train",
    "frame_scores",
]
