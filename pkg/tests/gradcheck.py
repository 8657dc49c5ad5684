"""Finite-difference gradient oracle, independent of the engine's backward pass.

Only the *forward* evaluation of the function under test is reused; gradients
here come from central differences on perturbed copies of the raw arrays.
For op-level checks the scalar is a linear probe (mean of the op output times
a fixed random cotangent), which exercises the full Jacobian action while
keeping the float32 finite-difference noise well below the tolerance.
"""

import numpy as np

import c2f.autodiff as ad
from c2f.autodiff import Tensor


def numeric_grads(f, tensors, eps=1e-3):
    """Central-difference gradients of the scalar f() w.r.t. each tensor."""
    grads = []
    for t in tensors:
        flat = t.data.reshape(-1)
        g = np.zeros(flat.size, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f().item()
            flat[i] = orig - eps
            lo = f().item()
            flat[i] = orig
            g[i] = (hi - lo) / (2.0 * eps)
        grads.append(g.reshape(t.data.shape))
    return grads


def rel_error(a, b):
    """Normwise relative error: max |a-b| over max magnitude of either side."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-8)
    return float(np.abs(a - b).max() / denom)


def assert_grads_close(f, tensors, rtol=1e-3, eps=1e-3):
    """Run autodiff on f() and compare every tensor's grad to the FD oracle."""
    for t in tensors:
        t.grad = None
    out = f()
    out.backward()
    fd = numeric_grads(f, tensors, eps=eps)
    for t, g_fd in zip(tensors, fd):
        assert t.grad is not None, "no gradient reached a requires_grad tensor"
        err = rel_error(t.grad, g_fd)
        assert err <= rtol, f"gradient mismatch {err:.2e} > {rtol:.0e}"


def probe_gradcheck(op_fn, tensors, probe_seed=1234, rtol=1e-3, eps=1e-3):
    """Gradcheck op_fn(-> Tensor) against a fixed random cotangent."""
    shape = op_fn().shape
    rng = np.random.default_rng(probe_seed)
    cot = Tensor(rng.normal(size=shape).astype(np.float32))

    def f():
        return ad.mean_all(ad.mul(op_fn(), cot))

    assert_grads_close(f, tensors, rtol=rtol, eps=eps)
