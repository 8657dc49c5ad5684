"""Deterministic 4-D tensor engine with reverse-mode autodiff.

Every tensor is a dense float32 array of rank exactly 4, laid out
(batch, height, width, channels) in row-major order.  Scalars are shape
(1, 1, 1, 1), per-channel vectors (1, 1, 1, c), channel matrices
(1, 1, c, c) and convolution kernels (kh, kw, cin, cout).

The op set is exactly what the codec needs: strided conv / transposed
conv (exact adjoints of each other), GDN / iGDN, space-to-depth and its
inverse, a small elementwise suite, and the pieces of the discretized
Gaussian rate term (exp, log, ndtr, clamp).  Non-finite values anywhere
in a forward or backward pass raise ``NumericError`` immediately.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ContractViolation, NumericError

__all__ = [
    "Tensor", "OpGraph", "GdnParams", "Adam", "adam_step", "scalar",
    "no_grad",
    "add", "sub", "mul", "div", "neg", "add_const", "mul_const",
    "relu", "exp", "log", "sqrt", "square", "powc", "ndtr", "clamp",
    "sum_all", "mean_all", "mse", "l2_norm",
    "concat_channels", "channel_slice",
    "conv2d", "deconv2d", "space_to_depth", "depth_to_space",
    "cmatmul", "avg_pool2", "gdn",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by op '{op}'")


class Tensor:
    """A 4-D float32 array with an optional gradient and tape entry."""

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, *,
                 op: str = "leaf", _parents=(), _vjp=None):
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float32))
        if arr.ndim != 4:
            raise ContractViolation(
                f"tensors are rank-4 (b,h,w,c); got shape {arr.shape}")
        _check_finite(arr, op)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = op
        self._parents: tuple[Tensor, ...] = _parents
        self._vjp = _vjp

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.size != 1:
            raise ContractViolation(f"item() on non-scalar shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(OpGraph(self), self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, grad={self.requires_grad})"

    # operator sugar; scalars are folded into const ops
    def __add__(self, other):
        return add_const(self, other) if isinstance(other, (int, float)) else add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add_const(self, -other) if isinstance(other, (int, float)) else sub(self, other)

    def __mul__(self, other):
        return mul_const(self, other) if isinstance(other, (int, float)) else mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul_const(self, 1.0 / other) if isinstance(other, (int, float)) else div(self, other)

    def __neg__(self):
        return neg(self)


def scalar(value: float) -> Tensor:
    return Tensor(np.full((1, 1, 1, 1), value, dtype=np.float32))


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording (inference); nestable."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _make(data: np.ndarray, op: str, parents: tuple[Tensor, ...], vjp) -> Tensor:
    """Wrap an op result; the tape entry is recorded only if needed."""
    data = np.ascontiguousarray(data, dtype=np.float32)
    _check_finite(data, op)
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, op=op, _parents=parents, _vjp=vjp)
    return Tensor(data, op=op)


class OpGraph:
    """Topological ordering of the op nodes reachable from a root tensor.

    Traversal follows recorded parent order, so the ordering (and hence
    gradient accumulation order) is identical across runs.
    """

    def __init__(self, root: Tensor):
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in reversed(node._parents):
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.nodes = order  # parents strictly before children


def backward(graph: OpGraph, loss: Tensor) -> None:
    """Accumulate gradients of `loss` into every requires_grad tensor.

    Nodes are visited in exact reverse topological order; repeated calls
    on an identical graph and values produce bit-identical gradients.
    """
    if loss.size != 1:
        raise ContractViolation("backward() needs a scalar loss")
    if graph.nodes[-1] is not loss:
        raise ContractViolation("graph root does not match the loss tensor")
    loss.grad = np.ones((1, 1, 1, 1), dtype=np.float32)
    for node in reversed(graph.nodes):
        if node._vjp is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._vjp(node.grad)):
            if g is None or not parent.requires_grad:
                continue
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient out of op '{node.op}'")
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += g.astype(np.float32, copy=False)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    for axis in range(4):
        if shape[axis] == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise suite

def add(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _make(a.data + b.data, "add", (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _make(a.data - b.data, "sub", (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return _make(a.data * b.data, "mul", (a, b), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data
    return _make(out, "div", (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, "neg", (a,), lambda g: (-g,))


def add_const(a: Tensor, c: float) -> Tensor:
    return _make(a.data + np.float32(c), "add_const", (a,), lambda g: (g,))


def mul_const(a: Tensor, c: float) -> Tensor:
    c32 = np.float32(c)
    return _make(a.data * c32, "mul_const", (a,), lambda g: (g * c32,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # subgradient at exactly 0 is defined as 0
    return _make(np.where(mask, a.data, 0), "relu", (a,), lambda g: (g * mask,))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make(out, "exp", (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _make(out, "log", (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)
    return _make(out, "sqrt", (a,), lambda g: (g * (0.5 / out),))


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, "square", (a,), lambda g: (g * (2.0 * a.data),))


def powc(a: Tensor, p: float) -> Tensor:
    with np.errstate(invalid="ignore", divide="ignore"):
        out = a.data ** np.float32(p)
    return _make(out, "powc", (a,), lambda g: (g * np.float32(p) * a.data ** np.float32(p - 1),))


def ndtr(a: Tensor) -> Tensor:
    """Standard normal CDF, elementwise."""
    out = special.ndtr(a.data.astype(np.float64))

    def vjp(g):
        pdf = np.exp(-0.5 * a.data.astype(np.float64) ** 2) * _INV_SQRT_2PI
        return (g * pdf.astype(np.float32),)

    return _make(out.astype(np.float32), "ndtr", (a,), vjp)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only strictly inside the range."""
    mask = (a.data > lo) & (a.data < hi)
    return _make(np.clip(a.data, lo, hi), "clamp", (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions

def sum_all(a: Tensor) -> Tensor:
    def vjp(g):
        return (np.broadcast_to(g, a.shape),)
    return _make(a.data.sum(dtype=np.float32).reshape(1, 1, 1, 1), "sum", (a,), vjp)


def mean_all(a: Tensor) -> Tensor:
    return mul_const(sum_all(a), 1.0 / a.size)


def mse(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ContractViolation(f"mse shape mismatch {a.shape} vs {b.shape}")
    return mean_all(square(sub(a, b)))


def l2_norm(a: Tensor) -> Tensor:
    return sqrt(sum_all(square(a)))


# ---------------------------------------------------------------------------
# shape ops

def concat_channels(tensors: list[Tensor]) -> Tensor:
    ref = tensors[0].shape[:3]
    for t in tensors[1:]:
        if t.shape[:3] != ref:
            raise ContractViolation(
                f"concat needs matching (b,h,w); got {[t.shape for t in tensors]}")
    sizes = [t.shape[3] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[..., bounds[i]:bounds[i + 1]] for i in range(len(sizes)))

    return _make(np.concatenate([t.data for t in tensors], axis=3),
                 "concat", tuple(tensors), vjp)


def channel_slice(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.shape[3]):
        raise ContractViolation(f"bad channel slice [{start}:{stop}] of {a.shape}")

    def vjp(g):
        full = np.zeros(a.shape, dtype=np.float32)
        full[..., start:stop] = g
        return (full,)

    return _make(a.data[..., start:stop], "channel_slice", (a,), vjp)


def space_to_depth(a: Tensor, block: int = 2) -> Tensor:
    b, h, w, c = a.shape
    if h % block or w % block:
        raise ContractViolation(f"space_to_depth needs dims divisible by {block}; got {a.shape}")
    def fwd(x):
        return (x.reshape(b, h // block, block, w // block, block, c)
                 .transpose(0, 1, 3, 2, 4, 5)
                 .reshape(b, h // block, w // block, block * block * c))
    def vjp(g):
        back = (g.reshape(b, h // block, w // block, block, block, c)
                 .transpose(0, 1, 3, 2, 4, 5)
                 .reshape(b, h, w, c))
        return (np.ascontiguousarray(back),)
    return _make(fwd(a.data), "space_to_depth", (a,), vjp)


def depth_to_space(a: Tensor, block: int = 2) -> Tensor:
    b, h, w, c = a.shape
    if c % (block * block):
        raise ContractViolation(f"depth_to_space needs channels divisible by {block * block}")
    c2 = c // (block * block)
    def fwd(x):
        return (x.reshape(b, h, w, block, block, c2)
                 .transpose(0, 1, 3, 2, 4, 5)
                 .reshape(b, h * block, w * block, c2))
    def vjp(g):
        back = (g.reshape(b, h, block, w, block, c2)
                 .transpose(0, 1, 3, 2, 4, 5)
                 .reshape(b, h, w, c))
        return (np.ascontiguousarray(back),)
    return _make(fwd(a.data), "depth_to_space", (a,), vjp)


# ---------------------------------------------------------------------------
# convolution: conv2d and deconv2d share one gather/scatter pair and are
# exact adjoints of each other for a shared kernel.

def _out_and_pad(in_dim: int, k: int, stride: int, padding: str) -> tuple[int, int, int]:
    if padding == "same":
        out = -(-in_dim // stride)
        total = max((out - 1) * stride + k - in_dim, 0)
        return out, total // 2, total - total // 2
    if padding == "valid":
        if in_dim < k:
            raise ContractViolation(f"valid conv needs dim {in_dim} >= kernel {k}")
        return (in_dim - k) // stride + 1, 0, 0
    raise ContractViolation(f"padding must be 'same' or 'valid', got {padding!r}")


def _gather(xp: np.ndarray, kern: np.ndarray, stride: int, oh: int, ow: int) -> np.ndarray:
    b = xp.shape[0]
    kh, kw, ci, co = kern.shape
    out = np.zeros((b * oh * ow, co), dtype=np.float32)
    for i in range(kh):
        for j in range(kw):
            sl = xp[:, i:i + (oh - 1) * stride + 1:stride,
                    j:j + (ow - 1) * stride + 1:stride, :]
            out += sl.reshape(b * oh * ow, ci) @ kern[i, j]
    return out.reshape(b, oh, ow, co)


def _scatter(y: np.ndarray, kern: np.ndarray, stride: int, hp: int, wp: int) -> np.ndarray:
    b, oh, ow, co = y.shape
    kh, kw, ci, _ = kern.shape
    xp = np.zeros((b, hp, wp, ci), dtype=np.float32)
    yf = y.reshape(b * oh * ow, co)
    for i in range(kh):
        for j in range(kw):
            xp[:, i:i + (oh - 1) * stride + 1:stride,
               j:j + (ow - 1) * stride + 1:stride, :] += \
                (yf @ kern[i, j].T).reshape(b, oh, ow, ci)
    return xp


def _kernel_grad(xp: np.ndarray, gy: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    b, oh, ow, co = gy.shape
    ci = xp.shape[3]
    gyf = gy.reshape(b * oh * ow, co)
    dk = np.zeros((kh, kw, ci, co), dtype=np.float32)
    for i in range(kh):
        for j in range(kw):
            sl = xp[:, i:i + (oh - 1) * stride + 1:stride,
                    j:j + (ow - 1) * stride + 1:stride, :]
            dk[i, j] = sl.reshape(b * oh * ow, ci).T @ gyf
    return dk


def _check_conv_args(x: Tensor, kernel: Tensor, stride: int) -> None:
    if stride not in (1, 2):
        raise ContractViolation(f"stride must be 1 or 2, got {stride}")
    if kernel.data.ndim != 4:
        raise ContractViolation("kernel must be (kh, kw, cin, cout)")


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    """2-D convolution over (b,h,w,c) with kernel (kh,kw,cin,cout)."""
    _check_conv_args(x, kernel, stride)
    b, h, w, ci = x.shape
    kh, kw, kci, co = kernel.shape
    if ci != kci:
        raise ContractViolation(f"conv2d channels {ci} != kernel cin {kci}")
    oh, pt, pb = _out_and_pad(h, kh, stride, padding)
    ow, pl, pr = _out_and_pad(w, kw, stride, padding)
    xp = np.pad(x.data, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    kern = kernel.data

    def vjp(g):
        dx = dk = None
        if x.requires_grad:
            full = _scatter(g, kern, stride, xp.shape[1], xp.shape[2])
            dx = full[:, pt:pt + h, pl:pl + w, :]
        if kernel.requires_grad:
            dk = _kernel_grad(xp, g, kh, kw, stride)
        return dx, dk

    return _make(_gather(xp, kern, stride, oh, ow), "conv2d", (x, kernel), vjp)


def deconv2d(y: Tensor, kernel: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    """Transposed convolution: the exact adjoint of conv2d for this kernel.

    kernel is laid out (kh, kw, cout, cin) exactly as it would be for the
    matching forward conv2d from cout channels back to cin channels, so
    <conv2d(a, k), b> == <a, deconv2d(b, k)> holds for all a, b.
    """
    _check_conv_args(y, kernel, stride)
    b, h, w, c = y.shape
    kh, kw, cm, kc = kernel.shape
    if c != kc:
        raise ContractViolation(f"deconv2d channels {c} != kernel cout {kc}")
    if padding == "same":
        big_h, big_w = h * stride, w * stride
    elif padding == "valid":
        big_h, big_w = (h - 1) * stride + kh, (w - 1) * stride + kw
    else:
        raise ContractViolation(f"padding must be 'same' or 'valid', got {padding!r}")
    oh, pt, pb = _out_and_pad(big_h, kh, stride, padding)
    ow, pl, pr = _out_and_pad(big_w, kw, stride, padding)
    if (oh, ow) != (h, w):
        raise ContractViolation(f"deconv2d inconsistent dims {(h, w)} for stride {stride}")
    hp, wp = big_h + pt + pb, big_w + pl + pr
    kern = kernel.data

    def vjp(g):
        dy = dk = None
        gp = np.pad(g, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        if y.requires_grad:
            dy = _gather(gp, kern, stride, h, w)
        if kernel.requires_grad:
            dk = _kernel_grad(gp, y.data, kh, kw, stride)
        return dy, dk

    full = _scatter(y.data, kern, stride, hp, wp)
    out = full[:, pt:pt + big_h, pl:pl + big_w, :]
    return _make(out, "deconv2d", (y, kernel), vjp)


def cmatmul(x: Tensor, m: Tensor) -> Tensor:
    """Per-location channel mixing: out[..., i] = sum_j x[..., j] * m[0,0,i,j]."""
    b, h, w, cj = x.shape
    if m.shape[:2] != (1, 1) or m.shape[3] != cj:
        raise ContractViolation(f"cmatmul matrix {m.shape} incompatible with {x.shape}")
    ci = m.shape[2]
    m2 = m.data[0, 0]
    xf = x.data.reshape(-1, cj)

    def vjp(g):
        gf = g.reshape(-1, ci)
        dx = dm = None
        if x.requires_grad:
            dx = (gf @ m2).reshape(x.shape)
        if m.requires_grad:
            dm = (gf.T @ xf).reshape(1, 1, ci, cj)
        return dx, dm

    return _make((xf @ m2.T).reshape(b, h, w, ci), "cmatmul", (x, m), vjp)


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 mean pooling, stride 2; trailing odd row/column is dropped."""
    b, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ContractViolation(f"avg_pool2 needs dims >= 2, got {x.shape}")
    view = x.data[:, :h2 * 2, :w2 * 2, :].reshape(b, h2, 2, w2, 2, c)

    def vjp(g):
        full = np.zeros(x.shape, dtype=np.float32)
        spread = np.broadcast_to((g * 0.25)[:, :, None, :, None, :], view.shape)
        full[:, :h2 * 2, :w2 * 2, :] = spread.reshape(b, h2 * 2, w2 * 2, c)
        return (full,)

    return _make(view.mean(axis=(2, 4), dtype=np.float32), "avg_pool2", (x,), vjp)


# ---------------------------------------------------------------------------
# GDN

@dataclass
class GdnParams:
    """Reparameterized GDN weights.

    beta = beta_u**2 + BETA_FLOOR and gamma = gamma_v**2 are rebuilt on
    every use, so beta >= BETA_FLOOR and gamma >= 0 hold by construction
    no matter what the optimizer does to the surrogates.
    """

    beta_u: Tensor   # (1, 1, 1, c)
    gamma_v: Tensor  # (1, 1, c, c)

    BETA_FLOOR = 1e-6

    @classmethod
    def create(cls, channels: int, beta_init: float = 1.0, gamma_init: float = 0.1,
               requires_grad: bool = True) -> "GdnParams":
        bu = np.full((1, 1, 1, channels), math.sqrt(beta_init - cls.BETA_FLOOR),
                     dtype=np.float32)
        gv = np.zeros((1, 1, channels, channels), dtype=np.float32)
        np.fill_diagonal(gv[0, 0], math.sqrt(gamma_init))
        return cls(Tensor(bu, requires_grad), Tensor(gv, requires_grad))

    @property
    def channels(self) -> int:
        return self.beta_u.shape[3]

    def beta(self) -> Tensor:
        return add_const(square(self.beta_u), self.BETA_FLOOR)

    def gamma(self) -> Tensor:
        return square(self.gamma_v)

    def beta_values(self) -> np.ndarray:
        return (self.beta_u.data ** 2 + self.BETA_FLOOR).reshape(-1)

    def gamma_values(self) -> np.ndarray:
        return (self.gamma_v.data ** 2)[0, 0]


def gdn(x: Tensor, params: GdnParams, inverse: bool = False) -> Tensor:
    """y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2); inverse multiplies."""
    if x.shape[3] != params.channels:
        raise ContractViolation(
            f"gdn params for {params.channels} channels, input has {x.shape[3]}")
    norm = add(cmatmul(square(x), params.gamma()), params.beta())
    root = sqrt(norm)
    return mul(x, root) if inverse else div(x, root)


# ---------------------------------------------------------------------------
# optimizer

def adam_step(param: np.ndarray, grad: np.ndarray, state: dict,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected adaptive-moment update, in place."""
    state["t"] += 1
    t = state["t"]
    m, v = state["m"], state["v"]
    m += (1.0 - beta1) * (grad - m)
    v += (1.0 - beta2) * (grad * grad - v)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    update = (lr * mhat / (np.sqrt(vhat) + eps)).astype(np.float32)
    if not np.all(np.isfinite(update)):
        raise NumericError("non-finite adam update")
    param -= update


class Adam:
    """Adam over a fixed parameter list, with serializable state."""

    def __init__(self, params: list[Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = [
            {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data), "t": 0}
            for p in self.params
        ]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for p, st in zip(self.params, self.state):
            if p.grad is None:
                continue
            adam_step(p.data, p.grad, st, self.lr, self.beta1, self.beta2, self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, st in enumerate(self.state):
            out[f"opt.{i}.m"] = st["m"]
            out[f"opt.{i}.v"] = st["v"]
            out[f"opt.{i}.t"] = np.array([st["t"]], dtype=np.float32)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for i, st in enumerate(self.state):
            st["m"] = arrays[f"opt.{i}.m"].reshape(st["m"].shape).astype(np.float32).copy()
            st["v"] = arrays[f"opt.{i}.v"].reshape(st["v"].shape).astype(np.float32).copy()
            st["t"] = int(arrays[f"opt.{i}.t"][0])
