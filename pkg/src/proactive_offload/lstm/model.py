"""LSTM cell, many-to-one network and backpropagation through time.

Gate layout follows the usual recurrent formulation: every gate sees the bias,
the input vector through ``U`` and the previous hidden vector through ``Z``::

    forget    f = sigmoid(bf + Uf x + Zf h_prev)
    input     i = sigmoid(bi + Ui x + Zi h_prev)
    output    o = sigmoid(bo + Uo x + Zo h_prev)
    candidate c = act(bc + Uc x + Zc h_prev)
    s = f * s_prev + i * c
    h = tanh(s) * o

``act`` is the logistic sigmoid by default; ``candidate="tanh"`` selects the
conventional LSTM variant. The network reads a series left to right from a
zero state and emits ``sigmoid(Wout . h_last + bout)``, a value in (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np
from scipy.special import expit

from ..errors import NonFiniteGradientError, ValidationError

GATES = ("f", "i", "o", "c")
TENSOR_NAMES = ("Uf", "Zf", "bf", "Ui", "Zi", "bi", "Uo", "Zo", "bo", "Uc", "Zc", "bc", "Wout", "bout")
CANDIDATE_ACTIVATIONS = ("sigmoid", "tanh")


def sigmoid(z):
    out = expit(z)
    return out if np.ndim(out) else float(out)


@dataclass
class LstmParams:
    Uf: np.ndarray
    Zf: np.ndarray
    bf: np.ndarray
    Ui: np.ndarray
    Zi: np.ndarray
    bi: np.ndarray
    Uo: np.ndarray
    Zo: np.ndarray
    bo: np.ndarray
    Uc: np.ndarray
    Zc: np.ndarray
    bc: np.ndarray
    Wout: np.ndarray
    bout: float
    input_len: int = 3
    candidate: str = "sigmoid"

    def __post_init__(self):
        self.bout = float(self.bout)
        if self.candidate not in CANDIDATE_ACTIVATIONS:
            raise ValidationError(f"candidate activation must be one of {CANDIDATE_ACTIVATIONS}")
        if self.input_len < 1:
            raise ValidationError("input_len must be >= 1")
        H, D = self.hidden_dim, self.input_dim
        for g in GATES:
            for name, shape in ((f"U{g}", (H, D)), (f"Z{g}", (H, H)), (f"b{g}", (H,))):
                arr = np.asarray(getattr(self, name), dtype=float)
                if arr.shape != shape:
                    raise ValidationError(f"{name} has shape {arr.shape}, expected {shape}")
                setattr(self, name, arr)
        self.Wout = np.asarray(self.Wout, dtype=float)
        if self.Wout.shape != (H,):
            raise ValidationError(f"Wout has shape {self.Wout.shape}, expected {(H,)}")
        for name in TENSOR_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"parameter {name} contains non-finite entries")

    @property
    def hidden_dim(self) -> int:
        return np.shape(self.Uf)[0]

    @property
    def input_dim(self) -> int:
        return np.shape(self.Uf)[1]

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: np.atleast_1d(np.asarray(getattr(self, name), dtype=float)) for name in TENSOR_NAMES}

    def replace(self, **tensors) -> "LstmParams":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(tensors)
        return LstmParams(**kw)

    def copy(self) -> "LstmParams":
        return self.replace(**{n: np.array(getattr(self, n), dtype=float) for n in TENSOR_NAMES[:-1]})

    def equals(self, other: "LstmParams") -> bool:
        if (self.input_len, self.candidate) != (other.input_len, other.candidate):
            return False
        a, b = self.tensors(), other.tensors()
        return all(a[n].shape == b[n].shape and np.array_equal(a[n], b[n]) for n in TENSOR_NAMES)

    @classmethod
    def zeros(cls, input_dim: int = 1, hidden_dim: int = 16, input_len: int = 3,
              candidate: str = "sigmoid") -> "LstmParams":
        H, D = hidden_dim, input_dim
        kw = {}
        for g in GATES:
            kw[f"U{g}"] = np.zeros((H, D))
            kw[f"Z{g}"] = np.zeros((H, H))
            kw[f"b{g}"] = np.zeros(H)
        return cls(**kw, Wout=np.zeros(H), bout=0.0, input_len=input_len, candidate=candidate)

    @classmethod
    def initialize(cls, rng: np.random.Generator, input_dim: int = 1, hidden_dim: int = 16,
                   input_len: int = 3, candidate: str = "sigmoid", scale: float = 0.08,
                   forget_bias: float = 1.0) -> "LstmParams":
        p = cls.zeros(input_dim, hidden_dim, input_len, candidate)
        for name in TENSOR_NAMES[:-1]:
            arr = getattr(p, name)
            arr[...] = rng.uniform(-scale, scale, size=arr.shape)
        p.bf[...] = forget_bias
        p.bout = float(rng.uniform(-scale, scale))
        return p


@dataclass
class CellState:
    hidden: np.ndarray
    internal: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int, batch: int | None = None) -> "CellState":
        shape = (hidden_dim,) if batch is None else (batch, hidden_dim)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class GateTrace:
    """Everything one forward step produced; consumed by the backward pass."""

    x: np.ndarray
    h_prev: np.ndarray
    s_prev: np.ndarray
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    c: np.ndarray
    s: np.ndarray
    tanh_s: np.ndarray
    h: np.ndarray


@dataclass
class SequenceTrace:
    steps: list[GateTrace] = field(default_factory=list)
    logit: np.ndarray | float = 0.0
    prediction: np.ndarray | float = 0.0


def _stacked(params: LstmParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gate weights stacked in f, i, o, c order: (4H, D), (4H, H), (4H,)."""
    U = np.concatenate([getattr(params, f"U{g}") for g in GATES])
    Z = np.concatenate([getattr(params, f"Z{g}") for g in GATES])
    b = np.concatenate([getattr(params, f"b{g}") for g in GATES])
    return U, Z, b


def _cell(params: LstmParams, x: np.ndarray, h_prev: np.ndarray, s_prev: np.ndarray,
          stacked=None) -> GateTrace:
    U, Z, b = stacked if stacked is not None else _stacked(params)
    H = params.hidden_dim
    pre = b + x @ U.T + h_prev @ Z.T
    gates = expit(pre[..., :3 * H])
    f, i, o = gates[..., :H], gates[..., H:2 * H], gates[..., 2 * H:]
    zc = pre[..., 3 * H:]
    c = expit(zc) if params.candidate == "sigmoid" else np.tanh(zc)
    s = f * s_prev + i * c
    tanh_s = np.tanh(s)
    return GateTrace(x, h_prev, s_prev, f, i, o, c, s, tanh_s, tanh_s * o)


def cell_forward(params: LstmParams, x, prev: CellState) -> tuple[CellState, GateTrace]:
    """One LSTM step. ``x`` may be a single vector or a (batch, input_dim) array."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (params.input_dim,):
        raise ValidationError(f"input has shape {x.shape}, expected trailing dim {params.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("input contains non-finite values")
    h, s = np.asarray(prev.hidden, dtype=float), np.asarray(prev.internal, dtype=float)
    if h.shape[-1:] != (params.hidden_dim,) or s.shape != h.shape:
        raise ValidationError(
            f"state shapes {h.shape}/{s.shape} do not match hidden_dim {params.hidden_dim}"
        )
    tr = _cell(params, x, h, s)
    return CellState(tr.h, tr.s), tr


def _as_batch(series) -> np.ndarray:
    """Coerce to (batch, steps, input_dim)."""
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :, None]
    elif arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] == 0:
        raise ValidationError("series must be a non-empty sequence of input vectors")
    return arr


def forward_batch(params: LstmParams, X: np.ndarray) -> SequenceTrace:
    """Run the network over a (batch, steps, input_dim) array from a zero state."""
    B, T, D = X.shape
    if D != params.input_dim:
        raise ValidationError(f"input vectors have length {D}, expected {params.input_dim}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("series contains non-finite values")
    H = params.hidden_dim
    h = np.zeros((B, H))
    s = np.zeros((B, H))
    trace = SequenceTrace()
    stacked = _stacked(params)
    for t in range(T):
        step = _cell(params, X[:, t, :], h, s, stacked)
        trace.steps.append(step)
        h, s = step.h, step.s
    trace.logit = h @ params.Wout + params.bout
    trace.prediction = sigmoid(trace.logit)
    return trace


def sequence_forward(params: LstmParams, series: Sequence) -> tuple[float, SequenceTrace]:
    """Predict the next value of one series of input vectors.

    A flat list of numbers is read as a series of 1-dimensional inputs.
    """
    X = _as_batch(series)
    if X.shape[0] != 1:
        raise ValidationError("sequence_forward takes a single series; use predict_batch")
    trace = forward_batch(params, X)
    return float(trace.prediction[0]), trace


def predict_batch(params: LstmParams, X) -> np.ndarray:
    return forward_batch(params, _as_batch(X)).prediction


def loss(prediction: float, target: float) -> float:
    return (prediction - target) ** 2


def _check_finite(name: str, arr) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteGradientError(name)


def loss_and_gradients(params: LstmParams, X: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error over the batch and its gradient for every tensor."""
    trace = forward_batch(params, X)
    pred = trace.prediction
    B = X.shape[0]
    err = pred - y
    mse = float(np.mean(err ** 2))

    grads = {name: np.zeros_like(t) for name, t in params.tensors().items()}
    dlogit = (2.0 / B) * err * pred * (1.0 - pred)
    h_last = trace.steps[-1].h
    grads["Wout"] = h_last.T @ dlogit
    grads["bout"] = np.array([dlogit.sum()])
    _check_finite("Wout", grads["Wout"])

    dh = np.outer(dlogit, params.Wout)
    ds_next = np.zeros_like(dh)
    _, Z, _ = _stacked(params)
    H = params.hidden_dim
    dU = np.zeros((4 * H, params.input_dim))
    dZ = np.zeros((4 * H, H))
    db = np.zeros(4 * H)
    for step in reversed(trace.steps):
        ds = ds_next + dh * step.o * (1.0 - step.tanh_s ** 2)
        if params.candidate == "sigmoid":
            dc_act = step.c * (1.0 - step.c)
        else:
            dc_act = 1.0 - step.c ** 2
        dpre = np.concatenate([
            ds * step.s_prev * step.f * (1.0 - step.f),
            ds * step.c * step.i * (1.0 - step.i),
            dh * step.tanh_s * step.o * (1.0 - step.o),
            ds * step.i * dc_act,
        ], axis=1)
        ds_next = ds * step.f
        dU += dpre.T @ step.x
        dZ += dpre.T @ step.h_prev
        db += dpre.sum(axis=0)
        dh = dpre @ Z
    for n, g in enumerate(GATES):
        rows = slice(n * H, (n + 1) * H)
        grads[f"U{g}"] = dU[rows]
        grads[f"Z{g}"] = dZ[rows]
        grads[f"b{g}"] = db[rows]
    for name, g in grads.items():
        _check_finite(name, g)
    return mse, grads


def gradients(params: LstmParams, batch: Sequence[tuple[Sequence, float]]) -> dict[str, np.ndarray]:
    """Gradient of the batch mean squared error, keyed by tensor name.

    Series in a batch may differ in length; equal-length groups are
    processed together and combined with their share of the batch.
    """
    if len(batch) == 0:
        raise ValidationError("gradient batch is empty")
    groups: dict[int, list[int]] = {}
    series = [_as_batch(s)[0] for s, _ in batch]
    for idx, s in enumerate(series):
        groups.setdefault(s.shape[0], []).append(idx)
    total = {name: np.zeros_like(t) for name, t in params.tensors().items()}
    for members in groups.values():
        X = np.stack([series[i] for i in members])
        y = np.array([float(batch[i][1]) for i in members])
        _, g = loss_and_gradients(params, X, y)
        share = len(members) / len(batch)
        for name in total:
            total[name] += share * g[name]
    return total
