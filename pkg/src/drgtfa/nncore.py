"""Dense float64 tensors with reverse-mode gradients, recurrent cells and SGD.

Only the operations the graph encoders and the decoder need are provided.
Every op returns a new :class:`Tensor`; gradients flow back through
:meth:`Tensor.backward`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "ShapeMismatch",
    "NonFiniteGradient",
    "tensor",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "tanh",
    "sigmoid",
    "relu",
    "leaky_relu",
    "exp",
    "log",
    "tsum",
    "mean",
    "softmax",
    "log_softmax",
    "concat",
    "take_rows",
    "segment_sum",
    "scatter_cols",
    "pick",
    "reshape",
    "dropout",
    "glorot",
    "zeros",
    "GRUParams",
    "LSTMParams",
    "gru_step",
    "lstm_step",
    "OptimizerState",
    "sgd_update",
    "clip_grad_norm",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
]

DTYPE = np.float64


class ShapeMismatch(ValueError):
    pass


class NonFiniteGradient(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without a seed needs a scalar")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=DTYPE))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if not isinstance(node, Parameter):
                    node.grad = None

    def _accumulate(self, g) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return _getitem(self, index)


class Parameter(Tensor):
    __slots__ = ("name", "trainable")

    def __init__(self, name: str, data, trainable: bool = True):
        super().__init__(data, requires_grad=trainable)
        self.name = name
        self.trainable = trainable

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    parents = tuple(p for p in parents if p.requires_grad)
    if not parents:
        return Tensor(data)
    return Tensor(data, True, parents, backward)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), back)


def div(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    out = a.data / b.data

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * out / b.data, b.shape))

    return _make(out, (a, b), back)


def matmul(a, b) -> Tensor:
    """``a @ b`` for ``a`` of shape (..., n, k) and a 2-D ``b`` of shape (k, m)."""
    a, b = tensor(a), tensor(b)
    if b.data.ndim != 2 or a.data.shape[-1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

    def back(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            k = a.data.shape[-1]
            b._accumulate(a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1]))

    return _make(a.data @ b.data, (a, b), back)


def tanh(a) -> Tensor:
    a = tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: a._accumulate(g * (1.0 - out * out)))


def sigmoid(a) -> Tensor:
    a = tensor(a)
    out = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    return _make(out, (a,), lambda g: a._accumulate(g * out * (1.0 - out)))


def relu(a) -> Tensor:
    a = tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: a._accumulate(g * mask))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = tensor(a)
    factor = np.where(a.data > 0, 1.0, slope)
    return _make(a.data * factor, (a,), lambda g: a._accumulate(g * factor))


def exp(a) -> Tensor:
    a = tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: a._accumulate(g * out))


def log(a) -> Tensor:
    a = tensor(a)
    return _make(np.log(a.data), (a,), lambda g: a._accumulate(g / a.data))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = tensor(a)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def softmax(a, axis: int = -1) -> Tensor:
    a = tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        a._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _make(out, (a,), back)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def back(g):
        a._accumulate(g - np.exp(out) * g.sum(axis=axis, keepdims=True))

    return _make(out, (a,), back)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def back(g):
        for t, part in zip(tensors, np.split(g, bounds, axis=axis)):
            if t.requires_grad:
                t._accumulate(part)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def _getitem(a: Tensor, index) -> Tensor:
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(k, (slice, int, type(Ellipsis))) for k in parts)

    def back(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        a._accumulate(full)

    return _make(a.data[index], (a,), back)


def take_rows(a, idx) -> Tensor:
    """Rows ``a[idx]`` along the first axis."""
    a = tensor(a)
    idx = np.asarray(idx, dtype=np.intp)

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        a._accumulate(full)

    return _make(a.data[idx], (a,), back)


def segment_sum(a, segments, n: int) -> Tensor:
    """``out[s] = sum of a[k] over k with segments[k] == s``."""
    a = tensor(a)
    segments = np.asarray(segments, dtype=np.intp)
    out = np.zeros((n,) + a.data.shape[1:], dtype=DTYPE)
    np.add.at(out, segments, a.data)
    return _make(out, (a,), lambda g: a._accumulate(g[segments]))


def scatter_cols(a, cols, width: int) -> Tensor:
    """For 2-D ``a``: ``out[r, cols[r, k]] += a[r, k]``."""
    a = tensor(a)
    cols = np.asarray(cols, dtype=np.intp)
    rows = np.broadcast_to(np.arange(a.data.shape[0])[:, None], cols.shape)
    out = np.zeros((a.data.shape[0], width), dtype=DTYPE)
    np.add.at(out, (rows, cols), a.data)
    return _make(out, (a,), lambda g: a._accumulate(g[rows, cols]))


def pick(a, idx) -> Tensor:
    """``a[r, idx[r]]`` for each row of a 2-D tensor."""
    a = tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    rows = np.arange(a.data.shape[0])

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, idx), g)
        a._accumulate(full)

    return _make(a.data[rows, idx], (a,), back)


def reshape(a, shape) -> Tensor:
    a = tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: a._accumulate(g.reshape(a.shape)))


def dropout(a, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training."""
    a = tensor(a)
    if not training or rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _make(a.data * keep, (a,), lambda g: a._accumulate(g * keep))


def glorot(rng: np.random.Generator, shape) -> np.ndarray:
    limit = math.sqrt(6.0 / (shape[0] + shape[-1]))
    return rng.uniform(-limit, limit, size=shape)


def zeros(shape) -> np.ndarray:
    return np.zeros(shape, dtype=DTYPE)


@dataclass
class GRUParams:
    W_x: Parameter  # (d_in, 3 d_h), gate order reset, update, candidate
    W_h: Parameter  # (d_h, 3 d_h)
    b_x: Parameter
    b_h: Parameter

    @classmethod
    def init(cls, name: str, d_in: int, d_h: int, rng: np.random.Generator) -> "GRUParams":
        W_x = np.concatenate([glorot(rng, (d_in, d_h)) for _ in range(3)], axis=1)
        W_h = np.concatenate([glorot(rng, (d_h, d_h)) for _ in range(3)], axis=1)
        return cls(
            Parameter(f"{name}.W_x", W_x),
            Parameter(f"{name}.W_h", W_h),
            Parameter(f"{name}.b_x", zeros(3 * d_h)),
            Parameter(f"{name}.b_h", zeros(3 * d_h)),
        )

    def parameters(self) -> list[Parameter]:
        return [self.W_x, self.W_h, self.b_x, self.b_h]


@dataclass
class LSTMParams:
    W_x: Parameter  # (d_in, 4 d_h), gate order input, forget, cell, output
    W_h: Parameter
    b: Parameter

    @classmethod
    def init(cls, name: str, d_in: int, d_h: int, rng: np.random.Generator) -> "LSTMParams":
        W_x = np.concatenate([glorot(rng, (d_in, d_h)) for _ in range(4)], axis=1)
        W_h = np.concatenate([glorot(rng, (d_h, d_h)) for _ in range(4)], axis=1)
        return cls(
            Parameter(f"{name}.W_x", W_x),
            Parameter(f"{name}.W_h", W_h),
            Parameter(f"{name}.b", zeros(4 * d_h)),
        )

    def parameters(self) -> list[Parameter]:
        return [self.W_x, self.W_h, self.b]


def _check_cell(x, h, W_x, W_h, gates):
    d_h = W_h.shape[0]
    if x.shape[-1] != W_x.shape[0] or h.shape[-1] != d_h or W_x.shape[1] != gates * d_h:
        raise ShapeMismatch(f"cell input {x.shape}, state {h.shape}, weights {W_x.shape}/{W_h.shape}")
    return d_h


def gru_step(x, h, params: GRUParams) -> Tensor:
    """One GRU update of state ``h`` with input ``x``.

    r = σ(x W_xr + b_xr + h W_hr + b_hr)
    z = σ(x W_xz + b_xz + h W_hz + b_hz)
    n = tanh(x W_xn + b_xn + r ⊙ (h W_hn + b_hn))
    h' = (1 − z) ⊙ n + z ⊙ h
    """
    x, h = tensor(x), tensor(h)
    d = _check_cell(x, h, params.W_x, params.W_h, 3)
    gx = x @ params.W_x + params.b_x
    gh = h @ params.W_h + params.b_h
    r = sigmoid(gx[..., :d] + gh[..., :d])
    z = sigmoid(gx[..., d : 2 * d] + gh[..., d : 2 * d])
    n = tanh(gx[..., 2 * d :] + r * gh[..., 2 * d :])
    return (1.0 - z) * n + z * h


def lstm_step(x, h, c, params: LSTMParams) -> tuple[Tensor, Tensor]:
    x, h, c = tensor(x), tensor(h), tensor(c)
    d = _check_cell(x, h, params.W_x, params.W_h, 4)
    gates = x @ params.W_x + h @ params.W_h + params.b
    i = sigmoid(gates[..., :d])
    f = sigmoid(gates[..., d : 2 * d])
    g = tanh(gates[..., 2 * d : 3 * d])
    o = sigmoid(gates[..., 3 * d :])
    c_new = f * c + i * g
    return o * tanh(c_new), c_new


@dataclass
class OptimizerState:
    """Learning rate with multiplicative decay when the dev metric stalls."""

    learning_rate: float = 1.0
    decay_factor: float = 0.8
    best: float = math.inf
    decays: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def decay(self) -> None:
        self.learning_rate *= self.decay_factor
        self.decays += 1

    def end_epoch(self, dev_metric: float) -> bool:
        """Record a lower-is-better dev metric; decay and return True if it did not improve."""
        if dev_metric < self.best:
            self.best = dev_metric
            return False
        self.decay()
        return True


def clip_grad_norm(grads, max_norm: float = 5.0) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


def sgd_update(params, grads, state: OptimizerState):
    """In-place ``p ← p − lr·g``; returns ``params``."""
    params = list(params)
    grads = list(grads)
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(getattr(p, "name", "parameter"))
    for p, g in zip(params, grads):
        if g is not None:
            p.data -= state.learning_rate * g
    return params


def grad_check(fn, params, eps: float = 1e-5, floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` takes no arguments and returns a scalar Tensor computed from
    ``params``. The relative error of a coordinate is
    ``|a − n| / max(|a|, |n|, floor)``.
    """
    params = list(params)
    for p in params:
        p.grad = None
    fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = fn().data.item()
            flat[k] = orig - eps
            down = fn().data.item()
            flat[k] = orig
            numeric = (up - down) / (2 * eps)
            ak = a.reshape(-1)[k]
            err = abs(ak - numeric) / max(abs(ak), abs(numeric), floor)
            worst = max(worst, err)
    for p in params:
        p.grad = None
    return worst


CHECKPOINT_FORMAT = "drgtfa-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params, meta: dict | None = None) -> None:
    """Write parameters as JSON ``name -> {shape, values}``; floats round-trip exactly."""
    obj = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "params": {p.name: {"shape": list(p.shape), "values": p.data.ravel().tolist()} for p in params},
    }
    Path(path).write_text(json.dumps(obj), encoding="utf-8")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {obj.get('version')}")
    arrays = {
        name: np.asarray(entry["values"], dtype=DTYPE).reshape(entry["shape"]) for name, entry in obj["params"].items()
    }
    return arrays, obj["meta"]
