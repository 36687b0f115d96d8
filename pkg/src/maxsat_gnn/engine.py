"""A small reverse-mode autodiff engine over numpy arrays.

Only what the message-passing models need: affine maps, pointwise
nonlinearities, column concat/slice, row gathers, sparse-times-dense
aggregation and binary cross entropy. Arrays are 2-D. The working dtype is
whatever the parameters carry (float32 for training, float64 for gradient
checks).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

PROB_CLAMP = 1e-7


class TapeError(RuntimeError):
    pass


class Var:
    __slots__ = ("value", "tape", "parents", "grad_fn", "index", "name")

    def __init__(self, value: np.ndarray, tape: "Tape", parents=(), grad_fn=None, name=None):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.grad_fn = grad_fn
        self.name = name
        self.index = tape._register(self)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Var{label} shape={self.value.shape} dtype={self.value.dtype}>"


class Tape:
    """Records one forward pass; :meth:`backward` may run once.

    Parameters are bound by name. Binding the same name twice returns the
    same leaf, so weights reused across layers accumulate their gradients.
    """

    def __init__(self, check_finite: bool = False, record_relu: bool = False):
        self._nodes: list[Var] = []
        self._params: dict[str, Var] = {}
        self._consumed = False
        self.check_finite = check_finite
        # activation masks in call order, for finite-difference checks near kinks
        self.relu_masks: list[np.ndarray] | None = [] if record_relu else None

    def _register(self, var: Var) -> int:
        if self._consumed:
            raise TapeError("tape already consumed by backward()")
        self._nodes.append(var)
        return len(self._nodes) - 1

    def __len__(self):
        return len(self._nodes)

    def param(self, name: str, value: np.ndarray) -> Var:
        var = self._params.get(name)
        if var is None:
            var = Var(value, self, name=name)
            self._params[name] = var
        return var

    def bind(self, params: Mapping[str, np.ndarray]) -> dict[str, Var]:
        return {name: self.param(name, value) for name, value in params.items()}

    def constant(self, value) -> Var:
        return Var(np.asarray(value), self)

    def backward(self, loss: Var) -> dict[str, np.ndarray]:
        """Gradients of the scalar ``loss`` for every bound parameter."""
        if self._consumed:
            raise TapeError("tape already consumed by backward()")
        if loss.tape is not self:
            raise TapeError("loss was recorded on a different tape")
        if loss.value.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        self._consumed = True
        grads: list[np.ndarray | None] = [None] * len(self._nodes)
        grads[loss.index] = np.ones_like(loss.value)
        for node in reversed(self._nodes[: loss.index + 1]):
            g = grads[node.index]
            if g is None or node.grad_fn is None:
                continue
            for parent, pg in zip(node.parents, node.grad_fn(g)):
                if pg is None or not isinstance(parent, Var):
                    continue
                if grads[parent.index] is None:
                    grads[parent.index] = pg
                else:
                    grads[parent.index] = grads[parent.index] + pg
        out = {}
        for name, var in self._params.items():
            g = grads[var.index]
            out[name] = np.zeros_like(var.value) if g is None else g.astype(var.value.dtype, copy=False)
        self._nodes.clear()
        return out


def _record(value: np.ndarray, parents: tuple, grad_fn: Callable) -> Var:
    tape = next(p.tape for p in parents if isinstance(p, Var))
    if tape.check_finite and not np.all(np.isfinite(value)):
        raise FloatingPointError("non-finite value produced during forward pass")
    return Var(value, tape, parents, grad_fn)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    axes = tuple(i for i, (a, b) in enumerate(zip(g.shape, shape)) if b == 1 and a != 1)
    return g.sum(axis=axes, keepdims=True).reshape(shape)


# ---- primitives -----------------------------------------------------------

def matmul(a: Var, b: Var) -> Var:
    return _record(a.value @ b.value, (a, b), lambda g: (g @ b.value.T, a.value.T @ g))


def affine(x: Var, w: Var, b: Var) -> Var:
    if x.value.shape[1] != w.value.shape[0] or b.value.shape != (1, w.value.shape[1]):
        raise ValueError(f"affine shape mismatch: x{x.shape} w{w.shape} b{b.shape}")
    out = x.value @ w.value
    out += b.value
    return _record(out, (x, w, b), lambda g: (g @ w.value.T, x.value.T @ g, g.sum(axis=0, keepdims=True)))


def add(a: Var, b: Var) -> Var:
    sa, sb = a.value.shape, b.value.shape
    return _record(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Var, b: Var) -> Var:
    sa, sb = a.value.shape, b.value.shape
    return _record(a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a: Var, b: Var) -> Var:
    sa, sb = a.value.shape, b.value.shape
    return _record(a.value * b.value, (a, b),
                   lambda g: (_unbroadcast(g * b.value, sa), _unbroadcast(g * a.value, sb)))


def scale(a: Var, s: float) -> Var:
    return _record(a.value * s, (a,), lambda g: (g * s,))


def relu(x: Var) -> Var:
    mask = x.value > 0
    if x.tape.relu_masks is not None:
        x.tape.relu_masks.append(mask)
    return _record(x.value * mask, (x,), lambda g: (g * mask,))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # 1/(1+e^-z) == (1 + tanh(z/2)) / 2; never overflows and is much faster than exp here
    half = z.dtype.type(0.5)
    t = np.multiply(z, half)
    np.tanh(t, out=t)
    t *= half
    t += half
    return t


def sigmoid(x: Var) -> Var:
    y = _sigmoid(x.value)
    return _record(y, (x,), lambda g: (g * y * (1 - y),))


def tanh(x: Var) -> Var:
    y = np.tanh(x.value)
    return _record(y, (x,), lambda g: (g * (1 - y * y),))


def concat_cols(xs: Sequence[Var]) -> Var:
    widths = [x.value.shape[1] for x in xs]
    bounds = np.cumsum([0] + widths)

    def grad_fn(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(xs)))

    return _record(np.concatenate([x.value for x in xs], axis=1), tuple(xs), grad_fn)


def slice_cols(x: Var, start: int, stop: int) -> Var:
    shape = x.value.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, start:stop] = g
        return (full,)

    return _record(x.value[:, start:stop], (x,), grad_fn)


def gather_rows(x: Var, idx: np.ndarray) -> Var:
    """``x[idx]``; ``idx`` must not repeat rows."""
    idx = np.asarray(idx, dtype=np.int64)
    shape = x.value.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[idx] = g
        return (full,)

    return _record(x.value[idx], (x,), grad_fn)


def sparse_aggregate(adj: sp.csr_matrix, messages: Var, adj_t: sp.csr_matrix | None = None) -> Var:
    """Row ``t`` of the result sums the message rows ``s`` with ``adj[t, s] == 1``.

    ``adj_t`` (the CSR transpose) is used for the backward product; it is
    derived when not supplied.
    """
    if adj.shape[1] != messages.value.shape[0]:
        raise ValueError(f"aggregation over {adj.shape[1]} sources, got {messages.value.shape[0]} rows")
    if adj_t is None:
        adj_t = adj.T.tocsr()
    out = np.asarray(adj @ messages.value)
    return _record(out, (messages,), lambda g: (np.asarray(adj_t @ g),))


def total(x: Var) -> Var:
    shape = x.value.shape
    return _record(x.value.sum(keepdims=True).reshape(1, 1), (x,),
                   lambda g: (np.broadcast_to(g.reshape(1, 1), shape).copy(),))


def bce(p: Var, y: np.ndarray, weights: np.ndarray | None = None) -> Var:
    """Binary cross entropy of probabilities ``p`` (column) against labels ``y``.

    Probabilities are clipped to ``[1e-7, 1 - 1e-7]``. Without ``weights`` the
    result is the mean over rows; otherwise ``sum(weights * bce_i)``.
    """
    y = np.asarray(y, dtype=p.value.dtype).reshape(p.value.shape)
    if weights is None:
        weights = np.full(p.value.shape, 1.0 / p.value.size, dtype=p.value.dtype)
    else:
        weights = np.asarray(weights, dtype=p.value.dtype).reshape(p.value.shape)
    inside = (p.value > PROB_CLAMP) & (p.value < 1 - PROB_CLAMP)
    q = np.clip(p.value, PROB_CLAMP, 1 - PROB_CLAMP)
    losses = -(y * np.log(q) + (1 - y) * np.log(1 - q))
    value = np.array([[np.sum(weights * losses)]], dtype=p.value.dtype)

    def grad_fn(g):
        return (g[0, 0] * weights * (-(y / q) + (1 - y) / (1 - q)) * inside,)

    return _record(value, (p,), grad_fn)


def bce_loss(p, y) -> float:
    """Mean binary cross entropy on plain arrays."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1 - PROB_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))


# ---- layers ----------------------------------------------------------------

MLP_DEPTH = 3


def mlp_shapes(prefix: str, d_in: int, d_hidden: int, d_out: int) -> dict[str, tuple[int, int]]:
    dims = [d_in] + [d_hidden] * (MLP_DEPTH - 1) + [d_out]
    shapes = {}
    for i in range(MLP_DEPTH):
        shapes[f"{prefix}.{i}.W"] = (dims[i], dims[i + 1])
        shapes[f"{prefix}.{i}.b"] = (1, dims[i + 1])
    return shapes


def mlp_forward(x: Var, params: Mapping[str, Var], prefix: str) -> Var:
    """Three affine layers with ReLU between them."""
    h = x
    for i in range(MLP_DEPTH):
        h = affine(h, params[f"{prefix}.{i}.W"], params[f"{prefix}.{i}.b"])
        if i < MLP_DEPTH - 1:
            h = relu(h)
    return h


def lstm_shapes(prefix: str, d_in: int, d: int) -> dict[str, tuple[int, int]]:
    return {f"{prefix}.Wx": (d_in, 4 * d), f"{prefix}.Wh": (d, 4 * d), f"{prefix}.b": (1, 4 * d)}


def _lstm(x: Var, h: Var, c: Var, wx: Var, wh: Var, b: Var) -> Var:
    """Fused LSTM cell; the result holds ``[h_new, c_new]`` side by side."""
    d = h.value.shape[1]
    z = x.value @ wx.value
    z += h.value @ wh.value
    z += b.value
    act = _sigmoid(z)
    gi, gf, go = act[:, :d], act[:, d:2 * d], act[:, 3 * d:]
    gg = np.tanh(z[:, 2 * d:3 * d])
    c_new = gf * c.value + gi * gg
    tc = np.tanh(c_new)
    out = np.concatenate([go * tc, c_new], axis=1)

    def grad_fn(g):
        g_h, g_c = g[:, :d], g[:, d:]
        g_c = g_c + g_h * go * (1 - tc * tc)
        dz = np.concatenate([
            g_c * gg * gi * (1 - gi),
            g_c * c.value * gf * (1 - gf),
            g_c * gi * (1 - gg * gg),
            g_h * tc * go * (1 - go),
        ], axis=1)
        return (dz @ wx.value.T, dz @ wh.value.T, g_c * gf,
                x.value.T @ dz, h.value.T @ dz, dz.sum(axis=0, keepdims=True))

    return _record(out, (x, h, c, wx, wh, b), grad_fn)


def lstm_cell_step(x: Var, h: Var, c: Var, params: Mapping[str, Var], prefix: str) -> tuple[Var, Var]:
    """One LSTM step; gate blocks are laid out input, forget, candidate, output."""
    d = h.value.shape[1]
    wx, wh, b = params[f"{prefix}.Wx"], params[f"{prefix}.Wh"], params[f"{prefix}.b"]
    if (x.value.shape[0] != h.value.shape[0] or c.value.shape != h.value.shape
            or wx.value.shape != (x.value.shape[1], 4 * d) or wh.value.shape != (d, 4 * d)):
        raise ValueError(f"lstm shape mismatch: x{x.shape} h{h.shape} c{c.shape} Wx{wx.shape}")
    hc = _lstm(x, h, c, wx, wh, b)
    return slice_cols(hc, 0, d), slice_cols(hc, d, 2 * d)


# ---- parameters and optimizer ----------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


@dataclass
class ParamStore:
    """Named parameter arrays with their Adam moments."""

    params: dict[str, np.ndarray]
    adam: dict[str, AdamState] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.params.items():
            if name not in self.adam:
                self.adam[name] = AdamState(np.zeros_like(value), np.zeros_like(value))

    def __getitem__(self, name):
        return self.params[name]

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self.params.items()}

    def astype(self, dtype) -> "ParamStore":
        return ParamStore({k: v.astype(dtype) for k, v in self.params.items()})

    def copy(self) -> "ParamStore":
        return ParamStore(
            {k: v.copy() for k, v in self.params.items()},
            {k: AdamState(s.m.copy(), s.v.copy(), s.step) for k, s in self.adam.items()},
        )


def init_params(shapes: Mapping[str, tuple[int, int]], seed: int, dtype=np.float32) -> ParamStore:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases 0 except LSTM forget gates at 1.

    Parameters are drawn in sorted name order from one PCG64 stream.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name in sorted(shapes):
        shape = shapes[name]
        if name.endswith(".b"):
            value = np.zeros(shape, dtype=dtype)
            if _is_lstm_bias(name, shapes):
                d = shape[1] // 4
                value[:, d:2 * d] = 1.0
        else:
            bound = 1.0 / np.sqrt(shape[0])
            value = rng.uniform(-bound, bound, size=shape).astype(dtype)
        params[name] = value
    return ParamStore({name: params[name] for name in shapes})


def _is_lstm_bias(name: str, shapes: Mapping) -> bool:
    return name[: -len(".b")] + ".Wh" in shapes


def adam_step(store: ParamStore, grads: Mapping[str, np.ndarray], lr: float, wd: float = 0.0,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> ParamStore:
    """In-place Adam update with bias correction; weight decay enters as ``g + wd * theta``."""
    missing = [name for name in store.params if name not in grads]
    if missing:
        raise KeyError(f"no gradient for parameters {missing}")
    for name, theta in store.params.items():
        g = np.asarray(grads[name], dtype=theta.dtype)
        if wd:
            g = g + theta.dtype.type(wd) * theta
        st = store.adam[name]
        st.step += 1
        st.m *= beta1
        st.m += (1 - beta1) * g
        st.v *= beta2
        st.v += (1 - beta2) * (g * g)
        m_hat = st.m / (1 - beta1 ** st.step)
        v_hat = st.v / (1 - beta2 ** st.step)
        theta -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(theta.dtype)
    return store
