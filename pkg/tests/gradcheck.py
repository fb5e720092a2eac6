"""Finite-difference gradient checking against the autodiff engine."""

import numpy as np

from puppet2d import tensorcore as tc

from oracles import finite_difference_grads, rel_err


def gradcheck(build_loss, arrays, h=1e-4, tol=1e-3):
    """Check d(loss)/d(array) for every input array, float64 throughout.

    build_loss maps a list of Tensors to a scalar Tensor. Returns the max
    relative error observed.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    leaves = [tc.Tensor.from_numpy(a, requires_grad=True) for a in arrays]
    loss = build_loss(leaves)
    tc.backward(loss)

    def scalar_fn(arrs):
        with tc.no_grad():
            return float(build_loss([tc.Tensor.from_numpy(a) for a in arrs]).data)

    fd = finite_difference_grads(scalar_fn, arrays, h=h)
    worst = 0.0
    for leaf, ref in zip(leaves, fd):
        got = leaf.grad if leaf.grad is not None else np.zeros_like(ref)
        worst = max(worst, rel_err(got, ref, floor=1e-4))
    assert worst < tol, f"gradcheck failed: max rel err {worst:.3e} >= {tol}"
    return worst


def gradcheck_module(module, build_loss, rng, entries_per_tensor=20, h=1e-4, tol=1e-3):
    """FD-check a float32 network by temporarily promoting it to float64.

    Probes a deterministic random subset of entries in every parameter
    tensor (exhaustive probing of ~1e6 entries is pure arithmetic cost with
    no extra coverage for vectorized kernels). Returns max relative error.
    """
    named = module.named_parameters()
    saved = [p.data for _, p in named]
    for _, p in named:
        p.data = p.data.astype(np.float64)
    try:
        module.zero_grad()
        loss = build_loss()
        tc.backward(loss)

        def forward():
            with tc.no_grad():
                return float(build_loss().data)

        worst = 0.0
        for _, p in named:
            flat = p.data.reshape(-1)
            gflat = (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1)
            n_probe = min(entries_per_tensor, flat.size)
            idx = rng.choice(flat.size, size=n_probe, replace=False)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + h
                fp = forward()
                flat[i] = orig - h
                fm = forward()
                flat[i] = orig
                fd = (fp - fm) / (2.0 * h)
                worst = max(worst, rel_err(gflat[i], fd, floor=1e-4))
        assert worst < tol, f"module gradcheck failed: max rel err {worst:.3e} >= {tol}"
        return worst
    finally:
        for (_, p), data in zip(named, saved):
            p.data = data
