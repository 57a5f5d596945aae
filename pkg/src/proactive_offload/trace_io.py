"""Demand traces: loading a real load column from CSV and synthetic generators.

A loaded column becomes a pool of unit-interval demand levels. Each task gets
a home level from a seeded permutation of the pool and wanders around it in
rank space, so tasks differ in popularity while every emitted value is a
genuine (normalized) observation from the file.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import TraceFormatError, ValidationError

log = logging.getLogger(__name__)

SYNTHETIC_KINDS = ("constant", "ar1", "sine")


@dataclass
class DemandTrace:
    series: np.ndarray  # (tasks, horizon)
    task_ids: list = field(default_factory=list)
    provenance: str = ""

    def __post_init__(self):
        self.series = np.atleast_2d(np.asarray(self.series, dtype=float))
        if not self.task_ids:
            self.task_ids = list(range(self.series.shape[0]))
        if len(self.task_ids) != self.series.shape[0]:
            raise ValidationError("one task id per series row is required")
        if np.any((self.series < 0) | (self.series > 1)) or not np.all(np.isfinite(self.series)):
            raise ValidationError("trace values must lie in [0, 1]")

    @property
    def horizon(self) -> int:
        return self.series.shape[1]

    @property
    def task_count(self) -> int:
        return self.series.shape[0]

    def as_dict(self) -> dict:
        return {t: self.series[i].tolist() for i, t in enumerate(self.task_ids)}

    def popularity(self) -> dict:
        """Mean demand over the whole horizon, per task."""
        return {t: float(m) for t, m in zip(self.task_ids, self.series.mean(axis=1))}

    def epoch(self, t: int) -> np.ndarray:
        return self.series[:, t]


def read_column(path: str | os.PathLike, column: str | int) -> np.ndarray:
    """Numeric values of one CSV column, chosen by header name or zero-based index."""
    path = Path(path)
    if not path.is_file():
        raise TraceFormatError(f"trace file not found: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError(f"{path} is empty", row=1) from None
        header = [h.strip() for h in header]
        if isinstance(column, int) or (isinstance(column, str) and column.isdigit() and column not in header):
            idx = int(column)
            if not 0 <= idx < len(header):
                raise TraceFormatError(f"column index {idx} out of range (file has {len(header)} columns)", row=1)
        else:
            if column not in header:
                raise TraceFormatError(f"column {column!r} not in header {header}", row=1)
            idx = header.index(column)
        values = []
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if idx >= len(row):
                raise TraceFormatError(f"row has no column {idx}", row=rowno)
            cell = row[idx].strip()
            try:
                v = float(cell)
            except ValueError:
                raise TraceFormatError(f"non-numeric value {cell!r} in column {header[idx]!r}", row=rowno) from None
            if not math.isfinite(v):
                raise TraceFormatError(f"non-finite value in column {header[idx]!r}", row=rowno)
            values.append(v)
    if not values:
        raise TraceFormatError(f"column {header[idx]!r} has no data rows")
    return np.array(values)


def normalize(values: Sequence[float]) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant column maps to all zeros."""
    arr = np.asarray(values, dtype=float)
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        warnings.warn("constant column: range is zero, mapping every value to 0", RuntimeWarning, stacklevel=2)
        return np.zeros_like(arr)
    return np.clip((arr - lo) / (hi - lo), 0.0, 1.0)


def pool_trace(pool: Sequence[float], task_count: int, horizon: int, seed: int,
               spread: float = 0.01, persistence: float = 0.9, provenance: str = "pool") -> DemandTrace:
    """Per-task demand series drawn from a pool of unit-interval levels.

    Home ranks come from seeded permutations of the sorted pool (a fresh
    permutation per ``len(pool)`` tasks). Each epoch the task's rank offset
    follows a stationary AR(1) walk with standard deviation ``spread * len(pool)``.
    """
    if task_count < 1 or horizon < 1:
        raise ValidationError("task_count and horizon must be >= 1")
    if not 0.0 <= persistence < 1.0:
        raise ValidationError("persistence must lie in [0, 1)")
    if spread < 0:
        raise ValidationError("spread must be >= 0")
    levels = np.sort(np.asarray(pool, dtype=float))
    n = len(levels)
    if n == 0:
        raise ValidationError("empty demand pool")
    rng = np.random.default_rng(seed)
    blocks = -(-task_count // n)
    home = np.concatenate([rng.permutation(n) for _ in range(blocks)])[:task_count]

    sd = spread * n
    offsets = np.empty((task_count, horizon))
    offsets[:, 0] = rng.normal(0.0, sd, task_count)
    innov = sd * math.sqrt(1.0 - persistence ** 2)
    for t in range(1, horizon):
        offsets[:, t] = persistence * offsets[:, t - 1] + rng.normal(0.0, innov, task_count)
    ranks = np.clip(np.rint(home[:, None] + offsets), 0, n - 1).astype(int)
    return DemandTrace(levels[ranks], provenance=provenance)


def load_csv(path: str | os.PathLike, column: str | int = "Y1", *, task_count: int, horizon: int,
             seed: int = 0, spread: float = 0.01, persistence: float = 0.9) -> DemandTrace:
    """Read a load column, normalize it, and map it onto ``task_count`` demand series."""
    raw = read_column(path, column)
    pool = normalize(raw)
    prov = f"csv:{Path(path).name}[{column}] rows={len(raw)} seed={seed} spread={spread} persistence={persistence}"
    return pool_trace(pool, task_count, horizon, seed, spread, persistence, provenance=prov)


def synthesize(kind: str, params: Mapping | None = None, horizon: int = 100, task_count: int = 1,
               seed: int = 0) -> DemandTrace:
    """Seeded synthetic demand, clipped to [0, 1].

    ``constant``: ``value`` for all tasks, or levels spread evenly over
    ``[low, high]`` in task order.
    ``ar1``: ``x[t] - mean = phi * (x[t-1] - mean) + N(0, sigma)``.
    ``sine``: ``period`` epochs, oscillating between ``low`` and ``high``,
    with a random phase per task unless ``random_phase`` is false.
    """
    params = dict(params or {})
    if horizon < 1 or task_count < 1:
        raise ValidationError("horizon and task_count must be >= 1")
    rng = np.random.default_rng(seed)
    t = np.arange(horizon)

    if kind == "constant":
        if "value" in params:
            levels = np.full(task_count, float(params["value"]))
        else:
            low, high = _range(params, 0.0, 1.0)
            levels = np.linspace(low, high, task_count) if task_count > 1 else np.array([low])
        if np.any((levels < 0) | (levels > 1)):
            raise ValidationError("constant level must lie in [0, 1]")
        series = np.repeat(levels[:, None], horizon, axis=1)
    elif kind == "ar1":
        phi = float(params.get("phi", 0.8))
        sigma = float(params.get("sigma", 0.05))
        mean = float(params.get("mean", 0.5))
        if not abs(phi) < 1:
            raise ValidationError(f"ar1 needs |phi| < 1, got {phi}")
        if sigma < 0 or not 0 <= mean <= 1:
            raise ValidationError("ar1 needs sigma >= 0 and mean in [0, 1]")
        x0 = float(params.get("x0", mean))
        series = np.empty((task_count, horizon))
        prev = np.full(task_count, x0)
        for step in range(horizon):
            prev = np.clip(mean + phi * (prev - mean) + rng.normal(0.0, sigma, task_count), 0.0, 1.0)
            series[:, step] = prev
    elif kind == "sine":
        low, high = _range(params, 0.2, 0.8)
        period = float(params.get("period", 24))
        if period <= 0:
            raise ValidationError("sine period must be positive")
        random_phase = str(params.get("random_phase", True)).lower() not in ("false", "0", "no")
        phase = rng.uniform(0, 2 * math.pi, task_count) if random_phase else np.zeros(task_count)
        wave = np.sin(2 * math.pi * t[None, :] / period + phase[:, None])
        series = low + (high - low) * (wave + 1.0) / 2.0
    else:
        raise ValidationError(f"unknown synthetic kind {kind!r}; expected one of {SYNTHETIC_KINDS}")
    prov = f"synthetic:{kind} {sorted(params.items())} seed={seed}"
    return DemandTrace(np.clip(series, 0.0, 1.0), provenance=prov)


def _range(params: Mapping, low: float, high: float) -> tuple[float, float]:
    lo, hi = float(params.get("low", low)), float(params.get("high", high))
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValidationError(f"need 0 <= low <= high <= 1, got {lo}, {hi}")
    return lo, hi


# Building geometry of the 12 shapes in the energy-efficiency design:
# relative compactness, surface, wall and roof area, overall height.
_SHAPES = [
    (0.98, 514.5, 294.0, 110.25, 7.0),
    (0.90, 563.5, 318.5, 122.5, 7.0),
    (0.86, 588.0, 294.0, 147.0, 7.0),
    (0.82, 612.5, 318.5, 147.0, 7.0),
    (0.79, 637.0, 343.0, 147.0, 7.0),
    (0.76, 661.5, 416.5, 122.5, 7.0),
    (0.74, 686.0, 245.0, 220.5, 3.5),
    (0.71, 710.5, 269.5, 220.5, 3.5),
    (0.69, 735.0, 294.0, 220.5, 3.5),
    (0.66, 759.5, 318.5, 220.5, 3.5),
    (0.64, 784.0, 343.0, 220.5, 3.5),
    (0.62, 808.5, 367.5, 220.5, 3.5),
]
# approximate zero-glazing heating load per shape and load added per unit glazing area
_BASE_HEATING = [15.5, 20.8, 21.5, 20.7, 19.7, 23.5, 6.0, 6.4, 6.8, 7.2, 7.8, 8.3]
_GLAZING_SLOPE = {7.0: 45.0, 3.5: 24.0}


def surrogate_energy_table(seed: int = 2012) -> list[dict]:
    """A stand-in for the 768-row building energy table, for offline use.

    Same factorial design as the public dataset (12 shapes x 4 orientations x
    16 glazing configurations) with heating/cooling loads from a simple
    additive model. It reproduces the coarse shape of the real load columns
    (bimodal by building height, skewed low) but is not the real data.
    """
    rng = np.random.default_rng(seed)
    glazing = [(0.0, 0)] + [(a, d) for a in (0.10, 0.25, 0.40) for d in range(1, 6)]
    rows = []
    for area, dist in glazing:
        for s, (rc, sa, wa, ra, h) in enumerate(_SHAPES):
            for orient in range(2, 6):
                heat = _BASE_HEATING[s] + _GLAZING_SLOPE[h] * area + rng.normal(0.0, 0.6)
                cool = 1.05 * heat + (4.0 if h == 7.0 else 4.5) + rng.normal(0.0, 1.0)
                rows.append({
                    "X1": rc, "X2": sa, "X3": wa, "X4": ra, "X5": h,
                    "X6": orient, "X7": area, "X8": dist,
                    "Y1": round(max(heat, 6.01), 2), "Y2": round(max(cool, 10.9), 2),
                })
    return rows


def write_surrogate_csv(path: str | os.PathLike, seed: int = 2012) -> Path:
    path = Path(path)
    rows = surrogate_energy_table(seed)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path
