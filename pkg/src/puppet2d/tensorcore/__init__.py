from .tensor import (
    Graph,
    Tensor,
    abs_,
    add,
    backward,
    causal_conv1d,
    clip,
    concat,
    cos,
    div,
    embedding,
    exp,
    getitem,
    log,
    matmul,
    minimum,
    mul,
    neg,
    no_grad,
    power,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    sin,
    softmax,
    softmax_cross_entropy,
    sqrt,
    stack,
    sub,
    tanh,
    transpose,
    where,
)
from .nn import MLP, LayerNorm, Linear, Module, orthogonal
from .optim import Adam, adam_step
from .checkpoint import load_checkpoint, save_checkpoint
