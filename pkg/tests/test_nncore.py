import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drgtfa import nncore as nn
from drgtfa.nncore import (
    GRUParams,
    LSTMParams,
    NonFiniteGradient,
    OptimizerState,
    Parameter,
    ShapeMismatch,
    clip_grad_norm,
    grad_check,
    gru_step,
    load_checkpoint,
    lstm_step,
    save_checkpoint,
    sgd_update,
)
from oracles import gru_scalar, lstm_scalar

TOL = 1e-4


def _p(name, shape, rng, scale=1.0):
    return Parameter(name, rng.normal(0, scale, size=shape))


def _unary_cases(rng):
    a = _p("a", (3, 4), rng)
    pos = Parameter("pos", rng.uniform(0.5, 2.0, size=(3, 4)))
    w = rng.normal(size=(3, 4))
    return [
        ("tanh", lambda: nn.tsum(nn.tanh(a) * w), [a]),
        ("sigmoid", lambda: nn.tsum(nn.sigmoid(a) * w), [a]),
        ("relu", lambda: nn.tsum(nn.relu(a + 0.05) * w), [a]),
        ("leaky_relu", lambda: nn.tsum(nn.leaky_relu(a + 0.05) * w), [a]),
        ("exp", lambda: nn.tsum(nn.exp(a) * w), [a]),
        ("log", lambda: nn.tsum(nn.log(pos) * w), [pos]),
        ("mean", lambda: nn.mean(a * a, axis=0)[1], [a]),
        ("softmax", lambda: nn.tsum(nn.softmax(a) * w), [a]),
        ("log_softmax", lambda: nn.tsum(nn.log_softmax(a, axis=0) * w), [a]),
        ("getitem", lambda: nn.tsum(a[1:, ::2] * w[1:, ::2]), [a]),
        ("reshape", lambda: nn.tsum(nn.reshape(a, (4, 3)) * w.reshape(4, 3)), [a]),
        ("take_rows", lambda: nn.tsum(nn.take_rows(a, [2, 0, 2]) * w[:3]), [a]),
        ("segment_sum", lambda: nn.tsum(nn.segment_sum(a, [1, 0, 1], 2) * w[:2]), [a]),
        ("scatter_cols", lambda: nn.tsum(nn.scatter_cols(a, [[0, 1, 1, 5]] * 3, 6) * _ramp(3, 6)), [a]),
        ("pick", lambda: nn.tsum(nn.pick(a, [3, 0, 3])), [a]),
    ]


def _ramp(*shape):
    return np.arange(np.prod(shape), dtype=float).reshape(shape) / 10 - 0.7


def _binary_cases(rng):
    a = _p("a", (3, 4), rng)
    b = _p("b", (3, 4), rng)
    row = _p("row", (4,), rng)
    m = _p("m", (4, 2), rng)
    den = Parameter("den", rng.uniform(0.5, 2.0, size=(4,)))
    return [
        ("add", lambda: nn.tsum((a + row) * (a + row)), [a, row]),
        ("sub", lambda: nn.tsum((a - b) * (a - row)), [a, b, row]),
        ("rsub", lambda: nn.tsum((1.0 - a) * b), [a, b]),
        ("mul", lambda: nn.tsum(a * b * row), [a, b, row]),
        ("div", lambda: nn.tsum(a / den), [a, den]),
        ("neg", lambda: nn.tsum(-a * b), [a, b]),
        ("matmul", lambda: nn.tsum(nn.tanh(a @ m)), [a, m]),
        ("vecmat", lambda: nn.tsum(nn.tanh(row @ m)), [row, m]),
        ("concat", lambda: nn.tsum(nn.tanh(nn.concat([a, b], axis=1) @ nn.concat([m, m], axis=0))), [a, b, m]),
    ]


@pytest.mark.parametrize("k", range(15))
def test_unary_op_gradients(k):
    name, fn, params = _unary_cases(np.random.default_rng(k))[k]
    assert grad_check(fn, params) < TOL, name


@pytest.mark.parametrize("k", range(9))
def test_binary_op_gradients(k):
    name, fn, params = _binary_cases(np.random.default_rng(k))[k]
    assert grad_check(fn, params) < TOL, name


def test_linear_function_gradient_exact():
    a = Parameter("a", np.array([0.3, -1.2, 2.0]))
    assert grad_check(lambda: nn.tsum(a * 3.0), [a]) < 1e-9


def test_shared_subexpression_accumulates():
    a = Parameter("a", np.array([1.5]))
    y = a * a
    (y + y * a).backward()
    assert a.grad[0] == pytest.approx(2 * 1.5 + 3 * 1.5**2)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        nn.tensor(np.ones((2, 3))) @ nn.tensor(np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_softmax_sums_to_one(seed):
    x = np.random.default_rng(seed).normal(0, 20, size=(5, 17))
    s = nn.softmax(x).data
    assert np.all(np.abs(s.sum(axis=-1) - 1) < 1e-12)
    assert np.allclose(np.exp(nn.log_softmax(x).data), s)


def test_dropout_statistics():
    rng = np.random.default_rng(0)
    x = np.ones(100_000)
    y = nn.dropout(x, 0.5, rng, training=True).data
    frac = float((y == 0).mean())
    assert abs(frac - 0.5) < 0.01
    assert set(np.unique(y)) == {0.0, 2.0}
    assert np.array_equal(nn.dropout(x, 0.5, rng, training=False).data, x)


# ---------------------------------------------------------------- cells


def _gru(d_in, d_h, seed):
    return GRUParams.init("g", d_in, d_h, np.random.default_rng(seed))


def test_gru_update_gate_saturated_carries_state():
    p = _gru(4, 4, 0)
    p.b_x.data[4:8] = 50.0
    h = np.random.default_rng(1).normal(size=4)
    out = gru_step(np.random.default_rng(2).normal(size=4), h, p).data
    assert np.allclose(out, h, atol=1e-12)


def test_gru_zero_weights_scalar():
    p = _gru(1, 1, 0)
    for q in p.parameters():
        q.data[:] = 0
    h = 0.8
    out = gru_step(np.array([0.3]), np.array([h]), p).data[0]
    # r = z = 1/2, candidate tanh(0) = 0, so h' = h/2
    assert out == pytest.approx(0.5 * h, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_gru_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    p = _gru(1, 1, seed)
    for q in p.parameters():
        q.data[:] = rng.normal(size=q.shape)
    x, h = rng.normal(), rng.normal()
    want = gru_scalar(x, h, p.W_x.data[0], p.W_h.data[0], p.b_x.data, p.b_h.data)
    assert gru_step(np.array([x]), np.array([h]), p).data[0] == pytest.approx(want, abs=1e-12)


def test_gru_gradient():
    rng = np.random.default_rng(3)
    p = _gru(4, 4, 3)
    for q in (p.b_x, p.b_h):
        q.data[:] = rng.normal(0, 0.3, size=q.shape)
    x = Parameter("x", rng.normal(size=4))
    h = Parameter("h", rng.normal(size=4))
    w = rng.normal(size=4)
    assert grad_check(lambda: nn.tsum(gru_step(x, h, p) * w), p.parameters() + [x, h]) < TOL


def test_gru_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        gru_step(np.ones(3), np.ones(4), _gru(4, 4, 0))
    with pytest.raises(ShapeMismatch):
        gru_step(np.ones(4), np.ones(3), _gru(4, 4, 0))


def _lstm(d_in, d_h, seed):
    return LSTMParams.init("l", d_in, d_h, np.random.default_rng(seed))


def test_lstm_forget_open_input_closed_conserves_cell():
    p = _lstm(4, 4, 0)
    p.b.data[0:4] = -50.0
    p.b.data[4:8] = 50.0
    rng = np.random.default_rng(1)
    c = rng.normal(size=4)
    _, c2 = lstm_step(rng.normal(size=4), rng.normal(size=4), c, p)
    assert np.allclose(c2.data, c, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_lstm_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    p = _lstm(1, 1, seed)
    for q in p.parameters():
        q.data[:] = rng.normal(size=q.shape)
    x, h, c = rng.normal(size=3)
    want_h, want_c = lstm_scalar(x, h, c, p.W_x.data[0], p.W_h.data[0], p.b.data)
    h2, c2 = lstm_step(np.array([x]), np.array([h]), np.array([c]), p)
    assert h2.data[0] == pytest.approx(want_h, abs=1e-12)
    assert c2.data[0] == pytest.approx(want_c, abs=1e-12)


def test_lstm_gradient():
    rng = np.random.default_rng(4)
    p = _lstm(4, 4, 4)
    p.b.data[:] = rng.normal(0, 0.3, size=p.b.shape)
    x, h, c = (Parameter(n, rng.normal(size=4)) for n in "xhc")
    w1, w2 = rng.normal(size=4), rng.normal(size=4)

    def fn():
        h2, c2 = lstm_step(x, h, c, p)
        return nn.tsum(h2 * w1) + nn.tsum(c2 * w2)

    assert grad_check(fn, p.parameters() + [x, h, c]) < TOL


def test_batched_cells():
    p = _gru(3, 2, 0)
    rng = np.random.default_rng(0)
    x, h = rng.normal(size=(5, 3)), rng.normal(size=(5, 2))
    batch = gru_step(x, h, p).data
    for k in range(5):
        assert np.allclose(batch[k], gru_step(x[k], h[k], p).data, atol=1e-15)


# ---------------------------------------------------------------- optimisation


def test_sgd_examples():
    p = Parameter("p", np.array([1.0]))
    sgd_update([p], [np.array([0.5])], OptimizerState(1.0))
    assert p.data[0] == 0.5
    q = Parameter("q", np.array([1.0, -2.0]))
    sgd_update([q], [np.zeros(2)], OptimizerState(1.0))
    assert q.data.tolist() == [1.0, -2.0]


def test_two_decays():
    state = OptimizerState(1.0)
    assert state.end_epoch(10.0) is False
    assert state.end_epoch(10.0) is True
    assert state.end_epoch(11.0) is True
    assert state.end_epoch(9.0) is False
    assert state.learning_rate == pytest.approx(0.64, abs=1e-15)
    assert state.decays == 2


def test_learning_rate_must_be_positive():
    with pytest.raises(ValueError):
        OptimizerState(0.0)


def test_non_finite_gradient_leaves_params_alone():
    p = Parameter("p", np.array([1.0]))
    q = Parameter("q", np.array([2.0]))
    with pytest.raises(NonFiniteGradient):
        sgd_update([p, q], [np.array([0.1]), np.array([np.nan])], OptimizerState())
    assert p.data[0] == 1.0 and q.data[0] == 2.0
    with pytest.raises(ShapeMismatch):
        sgd_update([p], [], OptimizerState())


def test_clip_grad_norm():
    g1, g2 = np.array([3.0, 0.0]), np.array([0.0, 4.0, 12.0])
    norm = clip_grad_norm([g1, g2], 5.0)
    assert norm == pytest.approx(13.0)
    total = math.sqrt((g1**2).sum() + (g2**2).sum())
    assert total == pytest.approx(5.0)
    small = np.array([0.1, 0.2])
    clip_grad_norm([small], 5.0)
    assert small.tolist() == [0.1, 0.2]


def test_same_seed_same_parameters():
    def run(seed):
        rng = np.random.default_rng(seed)
        p = _gru(3, 3, seed)
        state = OptimizerState()
        for _ in range(5):
            for q in p.parameters():
                q.grad = None
            nn.tsum(gru_step(rng.normal(size=3), rng.normal(size=3), p)).backward()
            sgd_update(p.parameters(), [q.grad for q in p.parameters()], state)
        return [q.data.copy() for q in p.parameters()]

    a, b = run(7), run(7)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_checkpoint_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    params = GRUParams.init("enc", 3, 5, rng).parameters() + [Parameter("tiny", np.array([1e-310, -0.0, 1 / 3]))]
    path = tmp_path / "ck.json"
    save_checkpoint(path, params, {"epoch": 3})
    arrays, meta = load_checkpoint(path)
    assert meta == {"epoch": 3}
    for p in params:
        assert arrays[p.name].shape == p.shape
        assert arrays[p.name].tobytes() == p.data.tobytes()


def test_checkpoint_rejects_other_files(tmp_path):
    bad = tmp_path / "x.json"
    bad.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(bad)
