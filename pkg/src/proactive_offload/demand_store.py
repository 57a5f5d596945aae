"""Sliding window of Tasks Demand Vectors kept by a single edge node."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import InsufficientHistoryError, ValidationError

TaskId = Hashable


@dataclass(frozen=True)
class TaskDescriptor:
    task_id: TaskId
    load: float
    demand_current: float = 0.0

    def __post_init__(self):
        if not (self.load >= 0 and math.isfinite(self.load)):
            raise ValidationError(f"task {self.task_id!r}: load must be finite and >= 0, got {self.load}")
        if not 0.0 <= self.demand_current <= 1.0:
            raise ValidationError(
                f"task {self.task_id!r}: demand must lie in [0, 1], got {self.demand_current}"
            )


class DemandWindow:
    """The ``capacity`` most recent TDVs for a fixed set of tasks.

    Values are held densely in a ring buffer of shape (capacity, M), one row
    per epoch, so per-task series are cheap to slice for the forecaster.
    Epochs are logical ticks; the caller decides when one happens.
    """

    def __init__(self, capacity: int, task_ids: Sequence[TaskId]):
        if capacity < 1:
            raise ValidationError(f"window capacity must be >= 1, got {capacity}")
        if len(task_ids) == 0:
            raise ValidationError("a window needs at least one task")
        self.capacity = int(capacity)
        self.task_ids = list(task_ids)
        self._index = {t: i for i, t in enumerate(self.task_ids)}
        if len(self._index) != len(self.task_ids):
            raise ValidationError("duplicate task ids")
        self._buf = np.zeros((self.capacity, len(self.task_ids)))
        self._head = 0  # slot the next epoch is written to
        self._len = 0
        self.epochs_recorded = 0

    @property
    def task_count(self) -> int:
        return len(self.task_ids)

    def __len__(self) -> int:
        return self._len

    @property
    def is_full(self) -> bool:
        return self._len == self.capacity

    def index_of(self, task_id: TaskId) -> int:
        try:
            return self._index[task_id]
        except KeyError:
            raise ValidationError(f"unknown task id {task_id!r}") from None

    def record_epoch(self, tdv: Mapping[TaskId, float]) -> "DemandWindow":
        """Append one TDV, evicting the oldest epoch when the window is full.

        The TDV must cover exactly the window's tasks.
        """
        unknown = [t for t in tdv if t not in self._index]
        if unknown:
            raise ValidationError(f"unknown task id(s) in TDV: {unknown[:5]!r}")
        if len(tdv) != self.task_count:
            missing = [t for t in self.task_ids if t not in tdv]
            raise ValidationError(f"TDV is missing task(s): {missing[:5]!r}")
        row = np.fromiter((tdv[t] for t in self.task_ids), dtype=float, count=self.task_count)
        return self.record_array(row)

    def record_array(self, row: Iterable[float]) -> "DemandWindow":
        """Fast path of :meth:`record_epoch` for a row already in task order."""
        row = np.asarray(row, dtype=float)
        if row.shape != (self.task_count,):
            raise ValidationError(f"expected {self.task_count} demand values, got shape {row.shape}")
        bad = ~((row >= 0.0) & (row <= 1.0))
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            raise ValidationError(
                f"demand for task {self.task_ids[j]!r} outside [0, 1]: {row[j]!r}"
            )
        self._buf[self._head] = row
        self._head = (self._head + 1) % self.capacity
        self._len = min(self._len + 1, self.capacity)
        self.epochs_recorded += 1
        return self

    def matrix(self, last: int | None = None) -> np.ndarray:
        """The last ``last`` epochs (default: all stored) as an (epochs, M) copy, oldest first."""
        n = self._len if last is None else last
        if n > self._len:
            raise InsufficientHistoryError(n, self._len)
        if n <= 0:
            return np.empty((0, self.task_count))
        idx = (self._head - n + np.arange(n)) % self.capacity
        return self._buf[idx]

    def recent_values(self, task_id: TaskId, l: int) -> list[float]:
        """The ``l`` most recent demand values of a task, oldest first."""
        if l < 1:
            raise ValidationError(f"l must be positive, got {l}")
        j = self.index_of(task_id)
        return self.matrix(l)[:, j].tolist()

    def full_history(self, task_id: TaskId) -> list[float]:
        if not self.is_full:
            raise InsufficientHistoryError(self.capacity, self._len)
        return self.recent_values(task_id, self.capacity)
