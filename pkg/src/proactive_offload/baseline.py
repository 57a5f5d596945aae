"""ETSI-style heuristic baseline: pick the peer with the lowest attribute rank."""

from __future__ import annotations

from dataclasses import astuple, dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class PeerNode:
    remaining_energy: float
    distance_from_edge: float
    neighbor_count: float


def etsi_ranks(nodes: Sequence[PeerNode | tuple[float, float, float]]) -> np.ndarray:
    """Equal-weight sum of min-max normalized attributes, one rank per node."""
    if len(nodes) == 0:
        raise ValidationError("ETSI needs at least one candidate node")
    attrs = np.array([astuple(n) if isinstance(n, PeerNode) else tuple(n) for n in nodes],
                     dtype=float)
    if attrs.ndim != 2 or attrs.shape[1] != 3:
        raise ValidationError("each node needs (remaining_energy, distance_from_edge, neighbor_count)")
    if not np.all(np.isfinite(attrs)) or np.any(attrs < 0):
        raise ValidationError("node attributes must be finite and non-negative")
    lo, hi = attrs.min(axis=0), attrs.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return ((attrs - lo) / span).sum(axis=1) / 3.0


def etsi_baseline(nodes: Sequence[PeerNode | tuple[float, float, float]]) -> int:
    """Index of the selected node (lowest rank, first one on ties)."""
    return int(np.argmin(etsi_ranks(nodes)))


def etsi_offload(queue: Sequence, k: int) -> list:
    """Demand-blind task choice for the baseline: the ``k`` most recent arrivals."""
    if k > len(queue):
        raise ValidationError(f"cannot offload {k} of {len(queue)} queued tasks")
    return list(queue)[len(queue) - k:]
