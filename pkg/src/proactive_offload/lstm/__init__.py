from .model import (
    CellState,
    GateTrace,
    LstmParams,
    cell_forward,
    forward_batch,
    gradients,
    loss,
    loss_and_gradients,
    predict_batch,
    sequence_forward,
    sigmoid,
)
from .serialization import load_params, save_params
from .training import (
    TrainingConfig,
    forecast_mse,
    lag_inputs,
    predict_di_f,
    predict_matrix,
    supervised_windows,
    train,
)

__all__ = [
    "CellState",
    "GateTrace",
    "LstmParams",
    "TrainingConfig",
    "cell_forward",
    "forecast_mse",
    "forward_batch",
    "gradients",
    "lag_inputs",
    "load_params",
    "loss",
    "loss_and_gradients",
    "predict_batch",
    "predict_di_f",
    "predict_matrix",
    "save_params",
    "sequence_forward",
    "sigmoid",
    "supervised_windows",
    "train",
]
