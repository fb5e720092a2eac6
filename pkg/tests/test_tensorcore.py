import math

import numpy as np
import pytest

from puppet2d import tensorcore as tc
from puppet2d.errors import ConfigError, ContractError, ShapeError

from gradcheck import gradcheck
from oracles import logsumexp_cross_entropy, naive_causal_conv1d, rel_err


def rng(seed=0):
    return np.random.default_rng(seed)


# -- matmul -------------------------------------------------------------------


def test_matmul_identity():
    m = rng(1).standard_normal((3, 5))
    out = tc.matmul(tc.Tensor.from_numpy(np.eye(3)), tc.Tensor.from_numpy(m))
    np.testing.assert_allclose(out.data, m)


def test_matmul_hand_case():
    a = tc.Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = tc.Tensor([[1.0], [1.0]])
    np.testing.assert_allclose(tc.matmul(a, b).data, [[3.0], [7.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        tc.matmul(tc.Tensor(np.zeros((2, 3))), tc.Tensor(np.zeros((2, 3))))


def test_matmul_gradient_vs_finite_differences():
    r = rng(2)
    a = r.standard_normal((5, 4))
    b = r.standard_normal((4, 3))
    w = r.standard_normal((5, 3))  # fixed cofactor
    err = gradcheck(
        lambda leaves: tc.reduce_sum(tc.matmul(leaves[0], leaves[1]) * tc.Tensor.from_numpy(w)),
        [a, b],
        tol=1e-4,
    )
    assert err < 1e-4


# -- causal conv --------------------------------------------------------------


def test_causal_conv_width1_is_projection():
    r = rng(3)
    x = r.standard_normal((7, 4)).astype(np.float32)
    k = r.standard_normal((1, 4, 2)).astype(np.float32)
    out = tc.causal_conv1d(tc.Tensor.from_numpy(x), tc.Tensor.from_numpy(k))
    np.testing.assert_allclose(out.data, x @ k[0], rtol=1e-6)


def test_causal_conv_causality():
    r = rng(4)
    x = r.standard_normal((9, 3)).astype(np.float32)
    k = r.standard_normal((3, 3, 5)).astype(np.float32)
    base = tc.causal_conv1d(tc.Tensor.from_numpy(x), tc.Tensor.from_numpy(k)).data
    x2 = x.copy()
    x2[-1] += 10.0
    pert = tc.causal_conv1d(tc.Tensor.from_numpy(x2), tc.Tensor.from_numpy(k)).data
    np.testing.assert_array_equal(base[:-1], pert[:-1])
    assert np.abs(base[-1] - pert[-1]).max() > 0


@pytest.mark.parametrize("stride,t", [(1, 8), (2, 8), (2, 9), (3, 10)])
def test_causal_conv_matches_naive_oracle(stride, t):
    r = rng(5 + stride)
    x = r.standard_normal((t, 3))
    k = r.standard_normal((4, 3, 2))
    out = tc.causal_conv1d(tc.Tensor.from_numpy(x), tc.Tensor.from_numpy(k), stride=stride)
    np.testing.assert_allclose(out.data, naive_causal_conv1d(x, k, stride), rtol=1e-12)


def test_causal_conv_batched_matches_per_sequence():
    r = rng(6)
    x = r.standard_normal((2, 6, 3))
    k = r.standard_normal((3, 3, 4))
    out = tc.causal_conv1d(tc.Tensor.from_numpy(x), tc.Tensor.from_numpy(k), stride=2)
    for b in range(2):
        np.testing.assert_allclose(out.data[b], naive_causal_conv1d(x[b], k, 2), rtol=1e-12)


def test_causal_conv_bad_width():
    with pytest.raises(ShapeError):
        tc.causal_conv1d(tc.Tensor(np.zeros((4, 2))), tc.Tensor(np.zeros((2, 3))))
    with pytest.raises(ConfigError):
        tc.causal_conv1d(tc.Tensor(np.zeros((4, 2))), tc.Tensor(np.zeros((2, 2, 1))), stride=0)


def test_causal_conv_gradcheck():
    r = rng(7)
    x = r.standard_normal((6, 2))
    k = r.standard_normal((3, 2, 3))
    gradcheck(
        lambda leaves: tc.reduce_sum(tc.causal_conv1d(leaves[0], leaves[1], stride=2) ** 2.0),
        [x, k],
    )


# -- cross entropy ------------------------------------------------------------


def test_cross_entropy_uniform_logits():
    logits = tc.Tensor(np.zeros((4, 512), dtype=np.float32))
    loss = tc.softmax_cross_entropy(logits, np.array([0, 7, 100, 511]))
    assert abs(loss.item() - math.log(512)) < 1e-5


def test_cross_entropy_monotone_in_margin():
    losses = []
    for margin in [0.0, 2.0, 5.0, 20.0]:
        row = np.zeros((1, 8), dtype=np.float32)
        row[0, 3] = margin
        losses.append(tc.softmax_cross_entropy(tc.Tensor(row), np.array([3])).item())
    assert all(a > b for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 1e-6


def test_cross_entropy_matches_logsumexp_oracle():
    r = rng(8)
    logits = r.standard_normal((16, 11))
    targets = r.integers(0, 11, size=16)
    got = tc.softmax_cross_entropy(tc.Tensor.from_numpy(logits), targets).item()
    assert abs(got - logsumexp_cross_entropy(logits, targets)) < 1e-6


def test_softmax_rows_sum_to_one():
    r = rng(9)
    s = tc.softmax(tc.Tensor.from_numpy(r.standard_normal((5, 33)) * 10)).data
    np.testing.assert_allclose(s.sum(axis=1), np.ones(5), atol=1e-6)


def test_cross_entropy_target_out_of_range():
    with pytest.raises(IndexError):
        tc.softmax_cross_entropy(tc.Tensor(np.zeros((2, 4))), np.array([0, 4]))


def test_cross_entropy_gradcheck():
    r = rng(10)
    logits = r.standard_normal((6, 5))
    targets = r.integers(0, 5, size=6)
    gradcheck(lambda leaves: tc.softmax_cross_entropy(leaves[0], targets), [logits])


# -- backward contract ----------------------------------------------------------


def test_backward_sum_gives_ones():
    x = tc.Tensor(np.arange(6, dtype=np.float32).reshape(2, 3), requires_grad=True)
    tc.backward(tc.reduce_sum(x))
    np.testing.assert_array_equal(x.grad, np.ones((2, 3), dtype=np.float32))


def test_backward_square_gives_2x():
    x = tc.Tensor(np.array([1.0, -2.0, 3.0], dtype=np.float32), requires_grad=True)
    tc.backward(tc.reduce_sum(x * x))
    np.testing.assert_allclose(x.grad, 2 * x.data, rtol=1e-6)


def test_backward_rejects_non_scalar():
    x = tc.Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(ContractError):
        tc.backward(x + 1.0)


def test_backward_visits_shared_node_once():
    # diamond: double-visiting the shared node would double the gradient
    x = tc.Tensor(np.array([2.0], dtype=np.float32), requires_grad=True)
    a = x * 2.0
    loss = tc.reduce_sum(a + a)
    graph = tc.backward(loss)
    np.testing.assert_allclose(x.grad, [4.0])
    assert len({id(n) for n in graph.nodes}) == len(graph.nodes)


def test_small_mlp_gradcheck_exhaustive():
    r = rng(11)
    w1, b1 = r.standard_normal((6, 8)), r.standard_normal(8)
    w2, b2 = r.standard_normal((8, 1)), r.standard_normal(1)
    x = r.standard_normal((4, 6))

    def loss_fn(leaves):
        lw1, lb1, lw2, lb2 = leaves
        h = tc.tanh(tc.matmul(tc.Tensor.from_numpy(x), lw1) + lb1)
        return tc.reduce_mean(tc.matmul(h, lw2) + lb2)

    gradcheck(loss_fn, [w1, b1, w2, b2])


# -- primitive gradient sweep ---------------------------------------------------


PRIMS = [
    ("add", lambda a, b: a + b, 2),
    ("sub", lambda a, b: a - b, 2),
    ("mul", lambda a, b: a * b, 2),
    ("div", lambda a, b: a / (b + 3.0), 2),
    ("pow", lambda a: (a + 3.0) ** 2.5, 1),
    ("exp", lambda a: tc.exp(a), 1),
    ("log", lambda a: tc.log(a + 3.0), 1),
    ("sqrt", lambda a: tc.sqrt(a + 3.0), 1),
    ("sin", lambda a: tc.sin(a), 1),
    ("cos", lambda a: tc.cos(a), 1),
    ("tanh", lambda a: tc.tanh(a), 1),
    ("relu", lambda a: tc.relu(a + 0.05), 1),
    ("abs", lambda a: tc.abs_(a + 0.05), 1),
    ("softmax", lambda a: tc.softmax(a), 1),
    ("reshape", lambda a: tc.reshape(a, (8, 2)), 1),
    ("transpose", lambda a: tc.transpose(a), 1),
    ("getitem", lambda a: a[1:3, ::2], 1),
    ("concat", lambda a, b: tc.concat([a, b], axis=1), 2),
    ("stack", lambda a, b: tc.stack([a, b], axis=0), 2),
    ("mean", lambda a: a.mean(axis=0, keepdims=True), 1),
    ("minimum", lambda a, b: tc.minimum(a, b + 0.05), 2),
    ("where", lambda a, b: tc.where(np.arange(16).reshape(4, 4) % 2 == 0, a, b), 2),
    ("clip", lambda a: tc.clip(a, -0.7, 0.7), 1),
    ("embedding", lambda a: tc.embedding(a, np.array([0, 2, 2, 3])), 1),
]


@pytest.mark.parametrize("name,fn,arity", PRIMS, ids=[p[0] for p in PRIMS])
def test_primitive_gradients_match_finite_differences(name, fn, arity):
    r = rng(hash(name) % 2**31)
    arrays = [r.uniform(-1.0, 1.0, size=(4, 4)) for _ in range(arity)]
    w = r.standard_normal((64,))

    def loss_fn(leaves):
        out = fn(*leaves)
        flat = tc.reshape(out, (out.size,))
        return tc.reduce_sum(flat * tc.Tensor.from_numpy(w[: out.size]))

    gradcheck(loss_fn, arrays)


def test_broadcast_add_unbroadcasts_gradient():
    x = tc.Tensor(np.ones((3, 4), dtype=np.float32), requires_grad=True)
    b = tc.Tensor(np.ones(4, dtype=np.float32), requires_grad=True)
    tc.backward(tc.reduce_sum(x + b))
    assert b.grad.shape == (4,)
    np.testing.assert_array_equal(b.grad, 3 * np.ones(4))


# -- adam ----------------------------------------------------------------------


def test_adam_zero_gradient_keeps_params():
    p = tc.Tensor(np.array([1.0, -2.0], dtype=np.float32), requires_grad=True)
    opt = tc.Adam([p], lr=0.1)
    p.grad = np.zeros(2, dtype=np.float32)
    before = p.data.copy()
    opt.step()
    np.testing.assert_array_equal(p.data, before)


def test_adam_first_step_is_lr_times_sign():
    p = tc.Tensor(np.array([1.0, 1.0], dtype=np.float32), requires_grad=True)
    opt = tc.Adam([p], lr=0.05, eps=1e-12)
    p.grad = np.array([3.0, -0.25], dtype=np.float32)
    opt.step()
    np.testing.assert_allclose(p.data, [1.0 - 0.05, 1.0 + 0.05], atol=1e-6)


def test_adam_converges_on_quadratic():
    p = tc.Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
    opt = tc.Adam([p], lr=0.1)
    trace = [abs(float(p.data[0]))]
    for _ in range(10):
        opt.zero_grad()
        tc.backward(tc.reduce_sum(p * p))
        opt.step()
        trace.append(abs(float(p.data[0])))
    assert all(a > b for a, b in zip(trace, trace[1:]))


# -- determinism and dtype -------------------------------------------------------


def test_forward_deterministic():
    def run():
        r = rng(42)
        x = tc.Tensor.from_numpy(r.standard_normal((8, 8)).astype(np.float32), requires_grad=True)
        y = tc.reduce_sum(tc.tanh(tc.matmul(x, x)) * 0.5)
        tc.backward(y)
        return y.data.copy(), x.grad.copy()

    y1, g1 = run()
    y2, g2 = run()
    assert np.array_equal(y1, y2) and np.array_equal(g1, g2)


def test_float32_default_float64_oracle_path():
    assert tc.Tensor([1.0]).dtype == np.float32
    assert tc.Tensor.from_numpy(np.zeros(2, dtype=np.float64)).dtype == np.float64


# -- checkpoint ------------------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    r = rng(12)
    net = tc.MLP(r, 5, [7], 2)
    opt = tc.Adam(net.parameters(), lr=1e-3)
    x = tc.Tensor.from_numpy(r.standard_normal((3, 5)).astype(np.float32))
    tc.backward(tc.reduce_sum(net(x)))
    opt.step()
    ref = net(x).data.copy()
    path = tmp_path / "net.ckpt"
    tc.save_checkpoint(path, net.named_parameters(), opt, meta={"kind": "mlp"})

    net2 = tc.MLP(rng(99), 5, [7], 2)
    opt2 = tc.Adam(net2.parameters(), lr=1e-3)
    extra = tc.load_checkpoint(path, net2.named_parameters(), opt2)
    assert extra == {"kind": "mlp"}
    assert opt2.step_count == 1
    np.testing.assert_array_equal(net2(x).data, ref)
    np.testing.assert_array_equal(opt2.m[0], opt.m[0])
