"""Full-batch training of the demand forecaster and its inference helpers."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..demand_store import DemandWindow, TaskId
from ..errors import InsufficientHistoryError, NonFiniteGradientError, TrainingDivergenceError, ValidationError
from .model import LstmParams, TENSOR_NAMES, loss_and_gradients, predict_batch

log = logging.getLogger(__name__)

OPTIMIZERS = ("gd", "adam")


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 1000
    learning_rate: float = 0.01
    input_len: int = 3
    seed: int = 0
    gradient_clip: float | None = None
    hidden_dim: int = 16
    input_dim: int = 1
    optimizer: str = "adam"
    candidate: str = "sigmoid"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")
        if self.input_len < 1:
            raise ValidationError("input_len must be >= 1")
        if self.gradient_clip is not None and not self.gradient_clip > 0:
            raise ValidationError("gradient_clip must be positive or None")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer must be one of {OPTIMIZERS}")

    def check_window(self, window_size: int) -> None:
        if self.span >= window_size:
            raise ValidationError(
                f"input length {self.input_len} (span {self.span}) must be below the window size {window_size}"
            )

    @property
    def span(self) -> int:
        """Demand values one prediction consumes."""
        return self.input_len + self.input_dim - 1


def lag_inputs(values, input_len: int, input_dim: int = 1) -> np.ndarray:
    """Turn the trailing values of a series (or rows of a matrix) into LSTM inputs.

    Step ``t`` of the result holds ``input_dim`` consecutive values, so the last
    ``input_len + input_dim - 1`` values are used. Shapes: (n,) -> (L, d) and
    (batch, n) -> (batch, L, d).
    """
    arr = np.asarray(values, dtype=float)
    span = input_len + input_dim - 1
    if arr.shape[-1] < span:
        raise InsufficientHistoryError(span, arr.shape[-1], "values")
    tail = arr[..., arr.shape[-1] - span:]
    idx = np.arange(input_len)[:, None] + np.arange(input_dim)[None, :]
    return tail[..., idx]


def supervised_windows(series: np.ndarray, input_len: int, input_dim: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """All (inputs, next value) pairs from a (tasks, horizon) demand matrix."""
    series = np.atleast_2d(np.asarray(series, dtype=float))
    span = input_len + input_dim - 1
    n_tasks, horizon = series.shape
    if horizon <= span:
        raise InsufficientHistoryError(span + 1, horizon)
    X, y = [], []
    for end in range(span, horizon):
        X.append(lag_inputs(series[:, end - span:end], input_len, input_dim))
        y.append(series[:, end])
    return np.concatenate(X), np.concatenate(y)


def _stack(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, tuple) and len(data) == 2 and isinstance(data[0], np.ndarray):
        X, y = data
    else:
        if len(data) == 0:
            raise ValidationError("training data is empty")
        rows = []
        for s, _ in data:
            a = np.asarray(s, dtype=float)
            rows.append(a[:, None] if a.ndim == 1 else a)
        try:
            X = np.stack(rows)
        except ValueError:
            raise ValidationError("training series must share one length") from None
        y = np.array([float(t) for _, t in data])
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 2:
        X = X[:, :, None]
    if len(X) == 0 or len(X) != len(y):
        raise ValidationError("training data is empty or inputs and targets differ in count")
    if np.any((y < 0) | (y > 1)):
        raise ValidationError("training targets must lie in [0, 1]")
    return X, y


def train(data, config: TrainingConfig, init: LstmParams | None = None) -> tuple[LstmParams, list[float]]:
    """Fit a forecaster by full-batch descent on the mean squared error.

    ``data`` is either a sequence of ``(series, target)`` pairs or an
    ``(X, y)`` tuple of arrays. Returns the final parameters and the loss
    measured at every epoch before that epoch's update.
    """
    X, y = _stack(data)
    rng = np.random.default_rng(config.seed)
    params = init.copy() if init is not None else LstmParams.initialize(
        rng, input_dim=X.shape[2], hidden_dim=config.hidden_dim,
        input_len=config.input_len, candidate=config.candidate,
    )
    names = TENSOR_NAMES
    theta = {n: np.array(v) for n, v in params.tensors().items()}
    m = {n: np.zeros_like(v) for n, v in theta.items()}
    v2 = {n: np.zeros_like(v) for n, v in theta.items()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    curve: list[float] = []

    for epoch in range(config.epochs):
        try:
            mse, grads = loss_and_gradients(params, X, y)
        except NonFiniteGradientError:
            raise TrainingDivergenceError(epoch, float("nan")) from None
        if not math.isfinite(mse):
            raise TrainingDivergenceError(epoch, mse)
        curve.append(mse)
        if config.gradient_clip is not None:
            norm = math.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
            if norm > config.gradient_clip:
                grads = {n: g * (config.gradient_clip / norm) for n, g in grads.items()}
        lr = config.learning_rate
        for n in names:
            g = grads[n]
            if config.optimizer == "adam":
                m[n] = b1 * m[n] + (1 - b1) * g
                v2[n] = b2 * v2[n] + (1 - b2) * g * g
                mhat = m[n] / (1 - b1 ** (epoch + 1))
                vhat = v2[n] / (1 - b2 ** (epoch + 1))
                theta[n] = theta[n] - lr * mhat / (np.sqrt(vhat) + eps)
            else:
                theta[n] = theta[n] - lr * g
        try:
            params = params.replace(**{n: theta[n] for n in names[:-1]}, bout=float(theta["bout"][0]))
        except ValidationError:
            raise TrainingDivergenceError(epoch, mse) from None
        if epoch % 200 == 0:
            log.debug("epoch %d mse %.6g", epoch, mse)
    return params, curve


def predict_di_f(params: LstmParams, window: DemandWindow, task_id: TaskId, L: int | None = None) -> float:
    """Forecast next-epoch demand of one task from its last ``L`` values."""
    L = params.input_len if L is None else L
    span = L + params.input_dim - 1
    if span > len(window):
        raise InsufficientHistoryError(span, len(window))
    values = window.recent_values(task_id, span)
    return float(predict_batch(params, lag_inputs(values, L, params.input_dim)[None])[0])


def predict_matrix(params: LstmParams, recent: np.ndarray, L: int | None = None) -> np.ndarray:
    """Forecasts for many tasks at once; ``recent`` is (tasks, values) oldest first."""
    L = params.input_len if L is None else L
    return predict_batch(params, lag_inputs(recent, L, params.input_dim))


def forecast_mse(params: LstmParams, series: Sequence | np.ndarray) -> tuple[float, float]:
    """Held-out one-step MSE of the model and of predicting the last value."""
    X, y = supervised_windows(np.asarray(series), params.input_len, params.input_dim)
    pred = predict_batch(params, X)
    naive = X[:, -1, -1]
    return float(np.mean((pred - y) ** 2)), float(np.mean((naive - y) ** 2))
