"""Dense tensors with taped reverse-mode autodiff on numpy buffers.

Eager execution: every primitive computes its numpy result immediately and,
when gradients are enabled, records parents plus a backward closure. A
backward pass traces the subgraph below the loss in reverse topological
order and visits each node exactly once. float32 is the training dtype;
float64 inputs propagate for high-precision oracles.
"""

import threading

import numpy as np

from ..errors import ConfigError, ContractError, ShapeError

_state = threading.local()


def _grad_enabled():
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Context manager that disables tape recording (inference mode)."""

    def __enter__(self):
        self._prev = _grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverses numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype if dtype is not None else np.float32)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def from_numpy(arr, requires_grad=False):
        """Wrap an array keeping its dtype (float64 stays float64)."""
        t = Tensor.__new__(Tensor)
        t.data = np.asarray(arr)
        t.grad = None
        t.requires_grad = bool(requires_grad)
        t._parents = ()
        t._backward = None
        t._op = "leaf"
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor.from_numpy(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)


def _as_tensor(x, dtype=np.float32):
    if isinstance(x, Tensor):
        return x
    return Tensor.from_numpy(np.asarray(x, dtype=dtype))


def _make(data, parents, backward, op):
    """Build a result node; records the tape only when grads are live."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    live = _grad_enabled() and any(p.requires_grad for p in parents)
    out.requires_grad = live
    out._parents = tuple(parents) if live else ()
    out._backward = backward if live else None
    out._op = op
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += _unbroadcast(g, t.data.shape) if g.shape != t.data.shape else g


# -- elementwise primitives ---------------------------------------------------


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def bw(g):
        _accum(a, g)
        _accum(b, g)

    return _make(out_data, (a, b), bw, "add")


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data - b.data

    def bw(g):
        _accum(a, g)
        _accum(b, -g)

    return _make(out_data, (a, b), bw, "sub")


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def bw(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _make(out_data, (a, b), bw, "mul")


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data / b.data

    def bw(g):
        _accum(a, g / b.data)
        _accum(b, -g * a.data / (b.data * b.data))

    return _make(out_data, (a, b), bw, "div")


def neg(a):
    a = _as_tensor(a)

    def bw(g):
        _accum(a, -g)

    return _make(-a.data, (a,), bw, "neg")


def power(a, p):
    a = _as_tensor(a)
    p = float(p)
    out_data = a.data**p

    def bw(g):
        _accum(a, g * p * a.data ** (p - 1.0))

    return _make(out_data, (a,), bw, "pow")


def exp(a):
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def bw(g):
        _accum(a, g * out_data)

    return _make(out_data, (a,), bw, "exp")


def log(a):
    a = _as_tensor(a)

    def bw(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), bw, "log")


def sqrt(a):
    a = _as_tensor(a)
    out_data = np.sqrt(a.data)

    def bw(g):
        _accum(a, g * 0.5 / out_data)

    return _make(out_data, (a,), bw, "sqrt")


def sin(a):
    a = _as_tensor(a)

    def bw(g):
        _accum(a, g * np.cos(a.data))

    return _make(np.sin(a.data), (a,), bw, "sin")


def cos(a):
    a = _as_tensor(a)

    def bw(g):
        _accum(a, -g * np.sin(a.data))

    return _make(np.cos(a.data), (a,), bw, "cos")


def tanh(a):
    a = _as_tensor(a)
    out_data = np.tanh(a.data)

    def bw(g):
        _accum(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), bw, "tanh")


def relu(a):
    a = _as_tensor(a)
    mask = a.data > 0

    def bw(g):
        _accum(a, g * mask)

    return _make(a.data * mask, (a,), bw, "relu")


def abs_(a):
    a = _as_tensor(a)
    sign = np.sign(a.data)

    def bw(g):
        _accum(a, g * sign)

    return _make(np.abs(a.data), (a,), bw, "abs")


def clip(a, lo, hi):
    """Clamp with zero gradient outside [lo, hi]."""
    a = _as_tensor(a)
    mask = (a.data > lo) & (a.data < hi)

    def bw(g):
        _accum(a, g * mask)

    return _make(np.clip(a.data, lo, hi), (a,), bw, "clip")


def where(cond, a, b):
    """Select by a constant boolean mask; gradients route to the taken side."""
    a, b = _as_tensor(a), _as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    out_data = np.where(cond, a.data, b.data)

    def bw(g):
        _accum(a, np.where(cond, g, 0.0))
        _accum(b, np.where(cond, 0.0, g))

    return _make(out_data, (a, b), bw, "where")


def minimum(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    take_a = a.data <= b.data

    def bw(g):
        _accum(a, np.where(take_a, g, 0.0))
        _accum(b, np.where(take_a, 0.0, g))

    return _make(np.minimum(a.data, b.data), (a, b), bw, "minimum")


# -- shape primitives ---------------------------------------------------------


def reshape(a, shape):
    a = _as_tensor(a)

    def bw(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), bw, "reshape")


def transpose(a, axes=None):
    a = _as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)

    def bw(g):
        _accum(a, np.ascontiguousarray(g.transpose(inv)))

    return _make(np.ascontiguousarray(a.data.transpose(axes)), (a,), bw, "transpose")


def getitem(a, key):
    a = _as_tensor(a)
    out_data = a.data[key]

    def bw(g):
        full = np.zeros_like(a.data)
        full[key] += g
        _accum(a, full)

    return _make(np.ascontiguousarray(out_data), (a,), bw, "getitem")


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, np.ascontiguousarray(g[tuple(idx)]))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, "concat")


def stack(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]

    def bw(g):
        for i, t in enumerate(tensors):
            _accum(t, np.ascontiguousarray(np.take(g, i, axis=axis)))

    return _make(np.stack([t.data for t in tensors], axis=axis), tensors, bw, "stack")


# -- reductions ---------------------------------------------------------------


def reduce_sum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(np.asarray(out_data), (a,), bw, "sum")


def reduce_mean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[ax] for ax in axis]))
    else:
        count = a.data.shape[axis]

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g / count, a.data.shape).copy())

    return _make(np.asarray(out_data), (a,), bw, "mean")


# -- linear algebra -----------------------------------------------------------


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def bw(g):
        ga = g @ b.data.swapaxes(-1, -2)
        gb = a.data.swapaxes(-1, -2) @ g
        _accum(a, _unbroadcast(ga, a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))

    return _make(out_data, (a, b), bw, "matmul")


def softmax(a, axis=-1):
    a = _as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        _accum(a, s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return _make(s, (a,), bw, "softmax")


def softmax_cross_entropy(logits, targets):
    """Mean negative log-likelihood of integer `targets` under row softmax."""
    logits = _as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be [N, K], got {logits.shape}")
    targets = np.asarray(targets)
    n, k = logits.shape
    if targets.shape != (n,):
        raise ShapeError(f"targets must be [{n}], got {targets.shape}")
    if targets.min(initial=0) < 0 or targets.max(initial=-1) >= k:
        raise IndexError(f"target index outside [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -logp[np.arange(n), targets].mean()

    def bw(g):
        grad = np.exp(logp)
        grad[np.arange(n), targets] -= 1.0
        _accum(logits, grad * (g / n))

    return _make(np.asarray(loss, dtype=logits.dtype), (logits,), bw, "softmax_ce")


def causal_conv1d(x, kernel, stride=1):
    """Left-padded temporal convolution: out[t] depends on in[<= t*stride].

    x: (..., T, Cin); kernel: (w, Cin, Cout); returns (..., ceil(T/stride), Cout).
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if kernel.ndim != 3:
        raise ShapeError(f"kernel must be [w, Cin, Cout], got {kernel.shape}")
    w = kernel.shape[0]
    if w < 1:
        raise ConfigError(f"kernel width must be >= 1, got {w}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if x.ndim < 2 or x.shape[-1] != kernel.shape[1]:
        raise ShapeError(f"input {x.shape} incompatible with kernel {kernel.shape}")
    t_in = x.shape[-2]
    t_out = (t_in + stride - 1) // stride
    pad = [(0, 0)] * (x.ndim - 2) + [(w - 1, 0), (0, 0)]
    xp = np.pad(x.data, pad)
    hi = (t_out - 1) * stride + 1
    out_data = None
    for i in range(w):
        contrib = xp[..., i : i + hi : stride, :] @ kernel.data[i]
        out_data = contrib if out_data is None else out_data + contrib

    def bw(g):
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kernel.data)
        for i in range(w):
            sl = xp[..., i : i + hi : stride, :]
            gxp[..., i : i + hi : stride, :] += g @ kernel.data[i].T
            gk[i] = np.tensordot(sl, g, axes=(tuple(range(g.ndim - 1)),) * 2)
        _accum(x, np.ascontiguousarray(gxp[..., w - 1 :, :]))
        _accum(kernel, gk)

    return _make(out_data, (x, kernel), bw, "causal_conv1d")


def embedding(table, indices):
    """Row gather from `table` [K, D]; scatter-add on the way back."""
    table = _as_tensor(table)
    indices = np.asarray(indices)
    k = table.shape[0]
    if indices.min(initial=0) < 0 or indices.max(initial=-1) >= k:
        raise IndexError(f"embedding index outside [0, {k})")
    out_data = table.data[indices]

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, indices.reshape(-1), g.reshape(-1, table.shape[1]))
        _accum(table, gt)

    return _make(out_data, (table,), bw, "embedding")


# -- graph and backward -------------------------------------------------------


class Graph:
    """Topologically ordered record of the primitives below one root."""

    def __init__(self, nodes):
        self.nodes = nodes

    @staticmethod
    def trace(root):
        """Iterative post-order DFS; returns nodes with root last."""
        order, visited, stack = [], set(), [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        return Graph(order)

    def run_backward(self, root_grad):
        self.nodes[-1].grad = root_grad
        for node in reversed(self.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def backward(loss):
    """Accumulate d(loss)/d(leaf) into `.grad` of every requires_grad leaf."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    graph = Graph.trace(loss)
    graph.run_backward(np.ones_like(loss.data))
    return graph
