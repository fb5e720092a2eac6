"""Adam with bias correction."""

import numpy as np

from ..errors import ShapeError


def adam_step(params, grads, m, v, step, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update over parallel lists of arrays.

    `step` is the 1-based update count used for bias correction.
    """
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    for p, g, mi, vi in zip(params, grads, m, v):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape {p.shape}")
        mi *= beta1
        mi += (1.0 - beta1) * g
        vi *= beta2
        vi += (1.0 - beta2) * g * g
        p -= lr * (mi / bc1) / (np.sqrt(vi / bc2) + eps)


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def step(self):
        self.step_count += 1
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(
            [p.data for p in self.params],
            grads,
            self.m,
            self.v,
            self.step_count,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
        )

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state(self):
        return {"m": self.m, "v": self.v, "step": self.step_count}

    def load_state(self, state):
        self.m = [np.array(x) for x in state["m"]]
        self.v = [np.array(x) for x in state["v"]]
        self.step_count = int(state["step"])
