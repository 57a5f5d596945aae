"""Multi-criteria rewards, Offloading Degree, and last-k selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .demand_store import TaskId
from .errors import ValidationError

PENALTY_MODES = ("complement", "scaled")


@dataclass(frozen=True)
class RewardConfig:
    """Reward parameters.

    ``penalty_mode`` decides how a below-threshold criterion is smoothed.
    With ``"complement"`` the penalty is ``-r * (1 - factor)``, so the reward
    is non-decreasing in its criterion and tends to ``-r`` far below the
    threshold. ``"scaled"`` uses ``-r * factor``, whose magnitude instead
    fades towards zero far below the threshold.
    """

    r1: float = 1.0
    r2: float = 10.0
    t_di: float = 0.5
    t_lambda: float = 10.0
    gamma: float = 10.0
    delta: float = 0.0
    q_max: int = 100
    activation_fraction: float = 0.8
    load_gamma: float | None = None
    load_delta: float | None = None
    penalty_mode: str = "complement"

    def __post_init__(self):
        if not (self.r1 > 0 and self.r2 > 0):
            raise ValidationError("base rewards r1 and r2 must be positive")
        if not 0.0 <= self.t_di <= 1.0:
            raise ValidationError("t_di must lie in [0, 1]")
        if not self.t_lambda > 0:
            raise ValidationError("t_lambda must be positive")
        if self.q_max < 1:
            raise ValidationError("q_max must be >= 1")
        if not 0.0 <= self.activation_fraction <= 1.0:
            raise ValidationError("activation_fraction must lie in [0, 1]")
        if self.penalty_mode not in PENALTY_MODES:
            raise ValidationError(f"penalty_mode must be one of {PENALTY_MODES}")
        for name in ("gamma", "delta", "load_gamma", "load_delta"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValidationError(f"{name} must be finite")

    @property
    def load_shape(self) -> tuple[float, float]:
        return (
            self.gamma if self.load_gamma is None else self.load_gamma,
            self.delta if self.load_delta is None else self.load_delta,
        )

    def load_active(self, queue_len: int) -> bool:
        return queue_len > self.activation_fraction * self.q_max


@dataclass(frozen=True)
class TaskScore:
    task_id: TaskId
    di_final: float
    load: float
    demand_reward: float
    load_reward: float | None
    od: float


def sigmoid_factor(y: float, gamma: float, delta: float) -> float:
    z = gamma * y - delta
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _signed(base: float, y: float, gamma: float, delta: float, rewarded: bool, mode: str) -> float:
    factor = sigmoid_factor(y, gamma, delta)
    if rewarded:
        return base * factor
    if mode == "complement":
        return -base * sigmoid_factor(-y, gamma, -delta)  # = -base * (1 - factor), no cancellation
    return -base * factor


def demand_reward(di_final: float, cfg: RewardConfig) -> float:
    """Reward when the final demand indicator reaches ``t_di``, penalty otherwise."""
    y = di_final - cfg.t_di
    return _signed(cfg.r1, y, cfg.gamma, cfg.delta, di_final >= cfg.t_di, cfg.penalty_mode)


def load_reward(lam: float, queue_len: int, cfg: RewardConfig) -> float | None:
    """Reward for light tasks, penalty for heavy ones; ``None`` while the queue is short."""
    if lam < 0:
        raise ValidationError(f"load must be >= 0, got {lam}")
    if not 0 <= queue_len <= cfg.q_max:
        raise ValidationError(f"queue length {queue_len} outside [0, {cfg.q_max}]")
    if not cfg.load_active(queue_len):
        return None
    gamma, delta = cfg.load_shape
    y = cfg.t_lambda - lam
    return _signed(cfg.r2, y, gamma, delta, lam <= cfg.t_lambda, cfg.penalty_mode)


def offloading_degree(task_id: TaskId, di_final: float, lam: float, queue_len: int,
                      cfg: RewardConfig) -> TaskScore:
    if not 0.0 <= di_final <= 1.0:
        raise ValidationError(f"di_final must lie in [0, 1], got {di_final}")
    rd = demand_reward(di_final, cfg)
    rl = load_reward(lam, queue_len, cfg)
    return TaskScore(task_id, di_final, lam, rd, rl, rd + (rl if rl is not None else 0.0))


def _offload_key(s: TaskScore):
    # lowest OD first; ties: heavier task first, then smaller id
    return (s.od, -s.load, s.task_id)


def rank_and_select(scores: Sequence[TaskScore], k: int) -> tuple[list[TaskScore], list[TaskId]]:
    """Sort by OD (descending) and pick the last ``k`` tasks for offloading."""
    if k < 1:
        raise ValidationError(f"k must be positive, got {k}")
    if k > len(scores):
        raise ValidationError(f"cannot offload {k} of {len(scores)} tasks")
    ascending = sorted(scores, key=_offload_key)
    ranked = ascending[::-1]
    return ranked, [s.task_id for s in ascending[:k]]
