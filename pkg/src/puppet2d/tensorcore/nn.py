"""Small module system: parameter registration, Linear/MLP, orthogonal init."""

import numpy as np

from . import tensor as tc
from .tensor import Tensor


def orthogonal(rng, shape, gain=1.0):
    """Orthogonal weight init (QR of a Gaussian), standard for PPO trunks."""
    flat = (shape[0], int(np.prod(shape[1:])))
    a = rng.standard_normal(size=(max(flat), min(flat)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    q = q.T if flat[0] < flat[1] else q
    return (gain * q[: flat[0], : flat[1]]).reshape(shape).astype(np.float32)


class Module:
    """Base with recursive named-parameter discovery over attributes."""

    def named_parameters(self, prefix=""):
        out = []
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((key, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(prefix=f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(prefix=f"{key}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append((f"{key}.{i}", item))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def num_params(self):
        return sum(p.size for p in self.parameters())


class Linear(Module):
    def __init__(self, rng, n_in, n_out, gain=np.sqrt(2.0)):
        self.weight = Tensor(orthogonal(rng, (n_in, n_out), gain=gain), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out, dtype=np.float32), requires_grad=True)

    def __call__(self, x):
        return tc.matmul(x, self.weight) + self.bias


class MLP(Module):
    """Stack of Linear+ReLU with a linear output layer."""

    def __init__(self, rng, n_in, hidden, n_out, out_gain=1.0):
        sizes = [n_in] + list(hidden)
        self.layers = [Linear(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        self.out = Linear(rng, sizes[-1], n_out, gain=out_gain)

    def __call__(self, x):
        for layer in self.layers:
            x = tc.relu(layer(x))
        return self.out(x)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        self.gamma = Tensor(np.ones(dim, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=np.float32), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / tc.sqrt(var + self.eps) * self.gamma + self.beta
