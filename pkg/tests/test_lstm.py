from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from proactive_offload.demand_store import DemandWindow
from proactive_offload.errors import (
    InsufficientHistoryError,
    NonFiniteGradientError,
    TrainingDivergenceError,
    ValidationError,
    WeightFormatError,
)
from proactive_offload.lstm import (
    CellState,
    LstmParams,
    TrainingConfig,
    cell_forward,
    forecast_mse,
    gradients,
    lag_inputs,
    load_params,
    loss,
    predict_di_f,
    save_params,
    sequence_forward,
    supervised_windows,
    train,
)
from proactive_offload.lstm.model import TENSOR_NAMES
from proactive_offload.trace_io import synthesize


def _logistic(z):
    return 1.0 / (1.0 + math.exp(-z))


def reference_forward(p: LstmParams, series) -> float:
    """Scalar loop implementation used as an oracle for the vectorized model."""
    H, D = p.hidden_dim, p.input_dim
    act = _logistic if p.candidate == "sigmoid" else math.tanh
    h = [0.0] * H
    s = [0.0] * H
    for x in series:
        x = [x] if np.ndim(x) == 0 else list(x)
        new_h, new_s = [], []
        for j in range(H):
            def pre(g):
                U, Z, b = getattr(p, "U" + g), getattr(p, "Z" + g), getattr(p, "b" + g)
                return b[j] + sum(U[j][d] * x[d] for d in range(D)) + sum(Z[j][m] * h[m] for m in range(H))
            f, i, o = _logistic(pre("f")), _logistic(pre("i")), _logistic(pre("o"))
            c = act(pre("c"))
            sj = f * s[j] + i * c
            new_s.append(sj)
            new_h.append(math.tanh(sj) * o)
        h, s = new_h, new_s
    return _logistic(sum(p.Wout[j] * h[j] for j in range(H)) + p.bout)


def random_params(rng, D, H, scale=0.5, candidate="sigmoid", L=3):
    p = LstmParams.initialize(rng, input_dim=D, hidden_dim=H, input_len=L, candidate=candidate, scale=scale)
    p.bf[...] = rng.uniform(-scale, scale, H)
    return p


def numeric_gradients(p: LstmParams, batch, step=1e-5):
    def mse(q):
        return float(np.mean([loss(sequence_forward(q, s)[0], t) for s, t in batch]))

    out = {}
    for name in TENSOR_NAMES:
        base = p.tensors()[name]
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            vals = []
            for sign in (1, -1):
                arr = base.copy()
                arr[idx] += sign * step
                kw = {name: arr[0] if name == "bout" else arr}
                vals.append(mse(p.replace(**kw)))
            g[idx] = (vals[0] - vals[1]) / (2 * step)
        out[name] = g
    return out


def max_rel_error(analytic, numeric, floor=1e-7):
    worst = 0.0
    for name in TENSOR_NAMES:
        a, n = np.atleast_1d(analytic[name]), np.atleast_1d(numeric[name])
        worst = max(worst, float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor))))
    return worst


def test_zero_params_single_step():
    # all gates 0.5, candidate 0.5: s = 0.25, h = 0.5 * tanh(0.25); mpmath gives 0.12245933120185456
    p = LstmParams.zeros(hidden_dim=2)
    state, tr = cell_forward(p, [0.7], CellState.zeros(2))
    np.testing.assert_allclose(state.internal, 0.25, rtol=0, atol=1e-15)
    np.testing.assert_allclose(state.hidden, 0.12245933120185456, rtol=1e-14)
    state, _ = cell_forward(p, [0.1], state)
    np.testing.assert_allclose(state.hidden, 0.17917869917539297, rtol=1e-14)


def test_zero_params_predict_half():
    assert sequence_forward(LstmParams.zeros(hidden_dim=5), [0.9, 0.1, 0.4])[0] == 0.5


@pytest.mark.parametrize("candidate", ["sigmoid", "tanh"])
@pytest.mark.parametrize("D, H, T", [(1, 1, 1), (1, 3, 4), (2, 3, 4), (3, 2, 6)])
def test_forward_matches_reference(candidate, D, H, T):
    rng = np.random.default_rng(D * 100 + H * 10 + T)
    p = random_params(rng, D, H, scale=1.0, candidate=candidate)
    series = rng.uniform(0, 1, (T, D))
    assert sequence_forward(p, series)[0] == pytest.approx(reference_forward(p, series), rel=1e-12)


def test_gate_ranges():
    rng = np.random.default_rng(3)
    p = random_params(rng, 2, 4, scale=3.0)
    _, trace = sequence_forward(p, rng.uniform(0, 1, (6, 2)))
    for step in trace.steps:
        for gate in (step.f, step.i, step.o, step.c):
            assert np.all((gate > 0) & (gate < 1))
        assert np.all(np.abs(step.tanh_s) < 1)


def test_cell_forward_validates_dimensions():
    p = LstmParams.zeros(input_dim=2, hidden_dim=3)
    with pytest.raises(ValidationError):
        cell_forward(p, [0.1], CellState.zeros(3))
    with pytest.raises(ValidationError):
        cell_forward(p, [0.1, 0.2], CellState.zeros(2))


@pytest.mark.parametrize("candidate", ["sigmoid", "tanh"])
def test_gradients_match_finite_differences(candidate):
    rng = np.random.default_rng(7)
    p = random_params(rng, 2, 3, candidate=candidate)
    batch = [(rng.uniform(0, 1, (4, 2)), float(rng.uniform())) for _ in range(3)]
    assert max_rel_error(gradients(p, batch), numeric_gradients(p, batch)) < 1e-4


def test_gradients_mixed_lengths():
    rng = np.random.default_rng(8)
    p = random_params(rng, 1, 2)
    batch = [(rng.uniform(0, 1, 3), 0.2), (rng.uniform(0, 1, 5), 0.9), (rng.uniform(0, 1, 3), 0.4)]
    assert max_rel_error(gradients(p, batch), numeric_gradients(p, batch)) < 1e-4


def test_gradient_zero_at_perfect_fit():
    p = LstmParams.zeros(hidden_dim=3)
    g = gradients(p, [([0.2, 0.3, 0.1], 0.5), ([0.9, 0.9, 0.9], 0.5)])
    assert sum(float(np.sum(v ** 2)) for v in g.values()) == 0.0


def test_duplicate_example_gradient_equals_single():
    rng = np.random.default_rng(9)
    p = random_params(rng, 1, 3)
    ex = (rng.uniform(0, 1, 4), 0.3)
    one, two = gradients(p, [ex]), gradients(p, [ex, ex])
    for name in TENSOR_NAMES:
        np.testing.assert_allclose(one[name], two[name], rtol=1e-14, atol=0)


def test_gradients_empty_batch():
    with pytest.raises(ValidationError):
        gradients(LstmParams.zeros(hidden_dim=2), [])


def test_nonfinite_gradient_names_parameter(monkeypatch):
    from proactive_offload.lstm import model

    p = LstmParams.zeros(hidden_dim=2)
    real = model.forward_batch

    def poisoned(params, X):
        tr = real(params, X)
        tr.steps[-1].h[...] = np.inf
        return tr

    monkeypatch.setattr(model, "forward_batch", poisoned)
    with pytest.raises(NonFiniteGradientError) as err:
        model.gradients(p, [([0.1, 0.2, 0.3], 0.4)])
    assert err.value.param == "Wout"


def test_train_constant_series():
    params, curve = train([([0.5] * 3, 0.5)] * 10, TrainingConfig(epochs=200, hidden_dim=8))
    assert curve[-1] < 1e-3
    assert len(curve) == 200


def test_train_constant_high_series_prediction():
    params, _ = train([([0.8] * 3, 0.8)] * 10, TrainingConfig(epochs=300, hidden_dim=8))
    w = DemandWindow(5, ["t"])
    for _ in range(3):
        w.record_epoch({"t": 0.8})
    assert abs(predict_di_f(params, w, "t") - 0.8) < 0.05


def test_loss_curve_non_increasing_small_step():
    series = synthesize("ar1", {"phi": 0.8, "sigma": 0.05}, horizon=40, task_count=5, seed=3).series
    X, y = supervised_windows(series, 3)
    _, curve = train((X, y), TrainingConfig(epochs=300, learning_rate=1e-3, optimizer="gd", hidden_dim=8))
    assert np.all(np.diff(curve) <= 1e-9)


@pytest.mark.parametrize("optimizer", ["adam", "gd"])
def test_train_deterministic(optimizer):
    data = [(np.linspace(0.1, 0.3, 3) + d, 0.4 + d) for d in (0.0, 0.1, 0.2)]
    cfg = TrainingConfig(epochs=30, hidden_dim=4, seed=11, optimizer=optimizer)
    a, ca = train(data, cfg)
    b, cb = train(data, cfg)
    assert a.equals(b) and ca == cb


def test_train_divergence_reports_epoch(monkeypatch):
    from proactive_offload.lstm import training

    real = training.loss_and_gradients
    calls = []

    def blow_up(params, X, y):
        calls.append(1)
        mse, g = real(params, X, y)
        return (float("inf") if len(calls) == 4 else mse), g

    monkeypatch.setattr(training, "loss_and_gradients", blow_up)
    with pytest.raises(TrainingDivergenceError) as err:
        train([([0.1, 0.9, 0.5], 0.9)] * 4, TrainingConfig(epochs=50, hidden_dim=2))
    assert err.value.epoch == 3


def test_train_rejects_targets_outside_unit_interval():
    with pytest.raises(ValidationError):
        train([([0.1, 0.2, 0.3], 1.5)], TrainingConfig(epochs=1))


def test_training_config_window_check():
    TrainingConfig(input_len=3).check_window(4)
    with pytest.raises(ValidationError):
        TrainingConfig(input_len=3).check_window(3)


def test_forecast_skill_on_ar1():
    kw = dict(kind="ar1", params={"phi": 0.8, "sigma": 0.05}, horizon=120, task_count=10)
    X, y = supervised_windows(synthesize(seed=1, **kw).series, 3)
    params, _ = train((X, y), TrainingConfig(epochs=300, hidden_dim=8))
    model, naive = forecast_mse(params, synthesize(seed=2, **kw).series)
    assert model <= naive


def test_lag_inputs_shapes():
    np.testing.assert_array_equal(lag_inputs([0.1, 0.2, 0.3, 0.4], 3, 2),
                                  [[0.1, 0.2], [0.2, 0.3], [0.3, 0.4]])
    with pytest.raises(InsufficientHistoryError):
        lag_inputs([0.1, 0.2], 3, 1)


def test_predict_insufficient_history():
    w = DemandWindow(5, ["t"])
    w.record_epoch({"t": 0.2})
    with pytest.raises(InsufficientHistoryError):
        predict_di_f(LstmParams.zeros(hidden_dim=2), w, "t", L=3)


@pytest.mark.parametrize("candidate", ["sigmoid", "tanh"])
def test_serialization_round_trip(candidate):
    rng = np.random.default_rng(4)
    p = random_params(rng, 2, 3, candidate=candidate, L=5)
    q = load_params(save_params(p))
    assert q.equals(p)
    assert save_params(q) == save_params(p)


def test_serialization_header():
    text = save_params(LstmParams.zeros(input_dim=1, hidden_dim=2)).decode()
    lines = text.splitlines()
    assert lines[0] == "LSTM v1 1 2 3"
    assert [ln.split()[0] for ln in lines[1:]] == list(TENSOR_NAMES)
    assert text.endswith("\n") and "\r" not in text


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=14, max_size=14))
def test_serialization_exact_for_arbitrary_floats(vals):
    p = LstmParams.zeros(hidden_dim=1)
    kw = {name: np.array([[v]]) if name[0] in "UZ" else np.array([v]) for name, v in zip(TENSOR_NAMES[:-1], vals)}
    p = p.replace(**kw, bout=vals[-1])
    assert load_params(save_params(p)).equals(p)


def test_truncated_file_rejected():
    data = save_params(LstmParams.zeros(hidden_dim=2))
    with pytest.raises(WeightFormatError):
        load_params(data[: len(data) // 2])


def test_header_payload_mismatch_reports_offset():
    lines = save_params(LstmParams.zeros(hidden_dim=2)).decode().splitlines(keepends=True)
    lines[0] = "LSTM v1 1 3 3\n"
    with pytest.raises(WeightFormatError) as err:
        load_params("".join(lines))
    assert err.value.offset >= len(lines[0])


@pytest.mark.parametrize("data", [b"", b"LSTM v2 1 2 3\n", b"NOPE\n", b"LSTM v1 1 x 3\n"])
def test_bad_header_rejected(data):
    with pytest.raises(WeightFormatError) as err:
        load_params(data)
    assert err.value.offset == 0


def test_bad_number_offset():
    text = save_params(LstmParams.zeros(hidden_dim=1)).decode()
    bad = text.replace("Zf 0.0", "Zf zero", 1)
    with pytest.raises(WeightFormatError) as err:
        load_params(bad)
    assert err.value.offset == bad.index("zero")
