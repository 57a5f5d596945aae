"""Demand indicators: recent-past summary, forecast, and their weighted geometric mean."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .demand_store import DemandWindow, TaskId
from .errors import InsufficientHistoryError, ValidationError
from .lstm import LstmParams, predict_di_f

EPSILON = 1e-6


@dataclass(frozen=True)
class AggregationWeights:
    w_past: float = 0.7
    w_future: float | None = None

    def __post_init__(self):
        if self.w_future is None:
            object.__setattr__(self, "w_future", 1.0 - self.w_past)
        for name in ("w_past", "w_future"):
            w = getattr(self, name)
            if not 0.0 <= w <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {w}")
        if not math.isclose(self.w_past + self.w_future, 1.0, abs_tol=1e-12):
            raise ValidationError("aggregation weights must sum to 1")


@dataclass(frozen=True)
class DemandIndicator:
    di_past: float
    di_future: float
    di_final: float


def di_past(recent: Sequence[float]) -> float:
    """Default summary of recent demand: the arithmetic mean."""
    if len(recent) == 0:
        raise ValidationError("di_past needs at least one observation")
    for v in recent:
        if not 0.0 <= v <= 1.0:
            raise ValidationError(f"demand value outside [0, 1]: {v!r}")
    return math.fsum(recent) / len(recent)


def wgm(dp: float, df: float, weights: AggregationWeights, eps: float = EPSILON) -> float:
    """Weighted geometric mean of the past and forecast indicators.

    Inputs are clamped to ``[eps, 1]`` first since the logarithm is undefined at 0.
    """
    if math.isnan(dp) or math.isnan(df):
        raise ValidationError("demand indicators must not be NaN")
    wp, wf = weights.w_past, weights.w_future
    # exact endpoints for degenerate weights
    if wf == 0.0:
        return min(max(dp, eps), 1.0)
    if wp == 0.0:
        return min(max(df, eps), 1.0)
    dp = min(max(dp, eps), 1.0)
    df = min(max(df, eps), 1.0)
    return math.exp((wp * math.log(dp) + wf * math.log(df)) / (wp + wf))


def demand_indicator(
    window: DemandWindow,
    task_id: TaskId,
    params: LstmParams,
    weights: AggregationWeights,
    l: int = 3,
    L: int | None = None,
    g: Callable[[Sequence[float]], float] = di_past,
) -> DemandIndicator:
    L = params.input_len if L is None else L
    if l > len(window):
        raise InsufficientHistoryError(l, len(window))
    dp = g(window.recent_values(task_id, l))
    if not 0.0 <= dp <= 1.0:
        raise ValidationError(f"past-demand summary must map into [0, 1], got {dp}")
    df = predict_di_f(params, window, task_id, L)
    return DemandIndicator(dp, df, wgm(dp, df, weights))
