"""A small reverse-mode autodiff engine over float64 numpy arrays.

Only the operations needed by the hedging, HapNet and HapNetPU models are
provided.  Broadcasting follows numpy; gradients are summed back to the
operand's shape.
"""
from __future__ import annotations

import contextlib
import json
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError, ParameterError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    # make numpy defer to our reflected operators (ndarray * Tensor -> Tensor)
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar
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
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = axes[0]
        return transpose(self, axes)

    def backward(self):
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _make(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def log(x: Tensor) -> Tensor:
    xd = x.data
    if np.any(xd <= 0):
        raise NumericError("log of a non-positive value")
    return _make(np.log(xd), (x,), lambda g: (g / xd,))


# reductions and shape ------------------------------------------------------

def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = x.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), bw)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes=()) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def _is_basic(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, type(Ellipsis))) or p is None for p in parts)


def getitem(x: Tensor, index) -> Tensor:
    shape = x.shape
    basic = _is_basic(index)

    def bw(g):
        out = np.zeros(shape)
        if basic:
            out[index] += g
        else:
            np.add.at(out, index, g)
        return (out,)

    return _make(x.data[index], (x,), bw)


def concat(tensors: Sequence[Tensor], axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                 lambda g: tuple(np.split(g, cuts, axis=axis)))


def stack(tensors: Sequence[Tensor], axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), bw)


# linear algebra ------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    if bd.ndim == 2 and ad.ndim > 2:
        # (..., k) @ (k, m): fold leading dims into one GEMM
        lead = ad.shape[:-1]
        a2 = ad.reshape(-1, ad.shape[-1])

        def bw2(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ bd.T).reshape(ad.shape), a2.T @ g2

        return _make((a2 @ bd).reshape(*lead, bd.shape[1]), (a, b), bw2)

    def bw(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make(ad @ bd, (a, b), bw)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w + b`` over the last axis, as one graph node."""
    xd, wd = x.data, w.data
    if xd.shape[-1] != wd.shape[0]:
        raise DimensionError(f"linear shape mismatch: {xd.shape} @ {wd.shape}")
    lead = xd.shape[:-1]
    x2 = xd.reshape(-1, xd.shape[-1])

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        return (g2 @ wd.T).reshape(xd.shape), x2.T @ g2, g2.sum(axis=0)

    out = (x2 @ wd + b.data).reshape(*lead, wd.shape[1])
    return _make(out, (x, w, b), bw)


def multi_head_attention(qkv: Tensor, heads: int) -> Tensor:
    """Scaled dot-product self-attention from packed (B, T, 3D) projections -> (B, T, D)."""
    B, T, D3 = qkv.shape
    D = D3 // 3
    if D3 != 3 * D or D % heads:
        raise DimensionError(f"packed qkv width {D3} incompatible with {heads} heads")
    dh = D // heads
    scale = 1.0 / np.sqrt(dh)
    q, k, v = qkv.data.reshape(B, T, 3, heads, dh).transpose(2, 0, 3, 1, 4)
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale
    e = np.exp(scores - scores.max(axis=-1, keepdims=True))
    att = e / e.sum(axis=-1, keepdims=True)
    out = (att @ v).transpose(0, 2, 1, 3).reshape(B, T, D)

    def bw(g):
        go = g.reshape(B, T, heads, dh).transpose(0, 2, 1, 3)
        dv = att.transpose(0, 1, 3, 2) @ go
        da = go @ v.transpose(0, 1, 3, 2)
        ds = att * (da - (da * att).sum(axis=-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        return (np.stack([dq, dk, dv]).transpose(1, 3, 0, 2, 4).reshape(B, T, D3),)

    return _make(out, (qkv,), bw)


# normalisation, probabilities, losses --------------------------------------

def softmax(x: Tensor, axis=-1) -> Tensor:
    xd = x.data
    if np.isnan(xd).any():
        raise NumericError("softmax received NaN input")
    e = np.exp(xd - xd.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), bw)


def log_softmax_np(logits: np.ndarray, axis=-1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps=1e-5) -> Tensor:
    """Normalise over the last axis, then scale by ``gain`` and shift by ``bias``."""
    n = x.shape[-1]
    if n < 2:
        raise DimensionError(f"layer_norm needs a last axis of length >= 2, got {x.shape}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gain.data

    def bw(g):
        dxhat = g * gd
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return (dx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape))

    return _make(xhat * gd + bias.data, (x, gain, bias), bw)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate); identity when not training."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape, dtype=np.float32) >= rate) * (1.0 / (1.0 - rate))
    return _make(x.data * keep, (x,), lambda g: (g * keep,))


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, c = logits.shape
    if c < 2:
        raise DimensionError(f"cross_entropy needs at least 2 classes, got {c}")
    if labels.shape[0] != n:
        raise DimensionError(f"{n} logit rows but {labels.shape[0]} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise IndexError(f"label out of range [0, {c})")
    logp = log_softmax_np(logits.data)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def bw(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        return (g * d / n,)

    return _make(loss, (logits,), bw)


def nll(probs: Tensor, labels) -> Tensor:
    """Mean -log p[label] for rows of probabilities (already normalised)."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    rows = np.arange(labels.shape[0])
    picked = getitem(probs, (rows, labels))
    return mul(tsum(log(picked)), -1.0 / labels.shape[0])


# graph traversal -----------------------------------------------------------

def backward(loss: Tensor):
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Gradients accumulate into existing ``.grad`` arrays; zeroing is the
    optimizer's job.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    # iterative post-order DFS; a node is marked on expansion so shared
    # parents always finish before every child that feeds them
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_ = [(loss, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# optimisation --------------------------------------------------------------

class Adam:
    """Adam with bias correction; ``step`` zeroes gradients afterwards."""

    def __init__(self, params: Iterable[Tensor], lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ContractError(f"parameter {p.name or i} has no gradient")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        self.zero_grad()


# verification --------------------------------------------------------------

def numerical_grad(f: Callable[[], float], param: Tensor, eps=1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f`` w.r.t. ``param`` (perturbed in place)."""
    out = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f()
        flat[i] = orig - eps
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor=1e-6) -> float:
    """||a - b|| / (||a|| + ||b||); the denominator is floored so vanishing gradients compare absolutely."""
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def gradcheck(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor] | Sequence[Tensor],
              eps=1e-5) -> dict[str, float]:
    """Compare backprop gradients with central differences; returns rel. error per parameter.

    ``loss_fn`` must be deterministic (fixed RNG inside) and rebuild the graph per call.
    """
    if not isinstance(params, Mapping):
        params = {str(i): p for i, p in enumerate(params)}
    for p in params.values():
        p.grad = None
    backward(loss_fn())
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for k, p in params.items()}
    for p in params.values():
        p.grad = None
    with no_grad():
        return {k: relative_error(analytic[k], numerical_grad(lambda: loss_fn().item(), p, eps))
                for k, p in params.items()}


# checkpoints ---------------------------------------------------------------

CHECKPOINT_FORMAT = "hapstream-checkpoint"


def save_params(params: Mapping[str, Tensor], path):
    """Write ``{name: {"shape": [...], "values": [row-major floats]}}`` as JSON."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "params": {k: {"shape": list(p.shape), "values": p.data.reshape(-1).tolist()}
                   for k, p in params.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_params(params: Mapping[str, Tensor], path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    stored = doc["params"]
    missing = set(params) - set(stored)
    if missing:
        raise KeyError(f"checkpoint lacks parameters: {sorted(missing)}")
    for k, p in params.items():
        shape = tuple(stored[k]["shape"])
        if shape != p.shape:
            raise DimensionError(f"{k}: checkpoint shape {shape} != model shape {p.shape}")
        p.data[...] = np.asarray(stored[k]["values"], dtype=np.float64).reshape(shape)
