"""Evaluation metrics: decision time, correct-decision ratio, low-popularity overlap."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

from .errors import ValidationError


def delta_metric(offloaded_di: Sequence[Sequence[float]], t_di: float, k: int) -> float:
    """Share of offloaded tasks whose final demand indicator is below ``t_di``.

    ``offloaded_di`` holds, per experiment, the DI_F values of the ``k``
    tasks offloaded there. Per-experiment ratios are averaged over all
    experiments.
    """
    if len(offloaded_di) == 0:
        raise ValidationError("delta needs at least one experiment")
    if k < 1:
        raise ValidationError("k must be positive")
    total = 0.0
    for values in offloaded_di:
        total += sum(1 for v in values if v < t_di) / k
    return total / len(offloaded_di)


def bottom_k(popularity: Mapping[Hashable, float], k: int) -> list:
    """The ``k`` least popular tasks; ties go to the smaller task id."""
    return [t for t, _ in sorted(popularity.items(), key=lambda kv: (kv[1], kv[0]))[:k]]


def omega_metric(offload_set: Iterable[Hashable], popularity: Mapping[Hashable, float], k: int) -> float:
    offload_set = set(offload_set)
    missing = offload_set.difference(popularity)
    if missing:
        raise ValidationError(f"no ground-truth popularity for {sorted(missing, key=repr)[:5]!r}")
    if len(offload_set) != k:
        raise ValidationError(f"offload set has {len(offload_set)} tasks, expected {k}")
    return len(offload_set.intersection(bottom_k(popularity, k))) / k


@dataclass(frozen=True)
class TauStats:
    mean: float  # seconds per decision over all candidate tasks
    per_task: float
    samples: tuple[float, ...]


def tau_metric(timings: Sequence[float], task_count: float = 1) -> TauStats:
    """Mean decision time and the per-task share of it.

    ``timings`` are the durations of individual decisions, each covering
    ``task_count`` candidate tasks on average.
    """
    if len(timings) == 0:
        raise ValidationError("tau needs at least one timing sample")
    if not task_count > 0:
        raise ValidationError("task_count must be positive")
    mean = math.fsum(timings) / len(timings)
    return TauStats(mean, mean / task_count, tuple(float(t) for t in timings))
