"""Line-oriented text format for forecaster weights.

::

    LSTM v1 <input_dim> <hidden_dim> <L>
    Uf <row-major values>
    ...
    bout <value>

Values use ``repr`` so every float survives the round trip bit for bit.
A model with the tanh candidate adds ``candidate=tanh`` to the header.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import WeightFormatError
from .model import LstmParams, TENSOR_NAMES

MAGIC = "LSTM"
VERSION = "v1"


def save_params(params: LstmParams) -> bytes:
    D, H = params.input_dim, params.hidden_dim
    header = f"{MAGIC} {VERSION} {D} {H} {params.input_len}"
    if params.candidate != "sigmoid":
        header += f" candidate={params.candidate}"
    lines = [header]
    for name, arr in params.tensors().items():
        lines.append(name + " " + " ".join(repr(float(v)) for v in arr.ravel()))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _expected_shapes(D: int, H: int) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for g in "fioc":
        shapes[f"U{g}"] = (H, D)
        shapes[f"Z{g}"] = (H, H)
        shapes[f"b{g}"] = (H,)
    shapes["Wout"] = (H,)
    shapes["bout"] = ()
    return shapes


def load_params(data: bytes | str) -> LstmParams:
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WeightFormatError("weight file is not UTF-8", exc.start) from None

    # (line, byte offset of the line start)
    lines = []
    offset = 0
    for raw in text.split("\n"):
        lines.append((raw, offset))
        offset += len(raw.encode("utf-8")) + 1
    if lines and lines[-1][0] == "":
        lines.pop()
    if not lines:
        raise WeightFormatError("empty weight file", 0)

    header, off = lines[0]
    parts = header.split(" ")
    if len(parts) not in (5, 6) or parts[0] != MAGIC or parts[1] != VERSION:
        raise WeightFormatError(f"bad header {header[:40]!r}", off)
    try:
        D, H, L = (int(p) for p in parts[2:5])
    except ValueError:
        raise WeightFormatError("header dimensions must be integers", off) from None
    if min(D, H, L) < 1:
        raise WeightFormatError("header dimensions must be positive", off)
    candidate = "sigmoid"
    if len(parts) == 6:
        key, _, value = parts[5].partition("=")
        if key != "candidate" or value not in ("sigmoid", "tanh"):
            raise WeightFormatError(f"unknown header field {parts[5]!r}", off)
        candidate = value

    shapes = _expected_shapes(D, H)
    body = lines[1:]
    if len(body) < len(TENSOR_NAMES):
        end = offset if not body else body[-1][1] + len(body[-1][0].encode("utf-8"))
        raise WeightFormatError(
            f"truncated file: expected {len(TENSOR_NAMES)} tensors, found {len(body)}", end
        )
    if len(body) > len(TENSOR_NAMES):
        raise WeightFormatError("unexpected trailing content", body[len(TENSOR_NAMES)][1])

    tensors = {}
    for name, (line, off) in zip(TENSOR_NAMES, body):
        got, _, payload = line.partition(" ")
        if got != name:
            raise WeightFormatError(f"expected tensor {name!r}, found {got!r}", off)
        tokens = payload.split(" ") if payload else []
        size = int(np.prod(shapes[name])) if shapes[name] else 1
        if len(tokens) != size:
            raise WeightFormatError(
                f"tensor {name} has {len(tokens)} values, header implies {size}", off
            )
        values = []
        col = off + len(name) + 1
        for tok in tokens:
            try:
                v = float(tok)
            except ValueError:
                raise WeightFormatError(f"bad number {tok!r} in {name}", col) from None
            if not math.isfinite(v):
                raise WeightFormatError(f"non-finite value in {name}", col)
            values.append(v)
            col += len(tok) + 1
        tensors[name] = np.array(values).reshape(shapes[name]) if shapes[name] else values[0]
    return LstmParams(**tensors, input_len=L, candidate=candidate)
