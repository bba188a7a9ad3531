"""Minimal reverse-mode autodiff over float64 numpy arrays.

A Tensor records the op that produced it; backward() replays the tape in
reverse topological order. Only the handful of primitives the mesh VAE needs
are provided, each with a finite-value guard so a divergence is caught at the
op that produced it instead of surfacing as NaN losses much later.

Sparse structure matrices (spiral gathers, pooling, Laplacians) enter through
sparse_matmul with the matrix held constant; only the dense operand gets a
gradient.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

CHECK_FINITE = True


class GradientError(ArithmeticError):
    pass


def _guard(data: np.ndarray, op: str) -> np.ndarray:
    # single fused pass: the sum of any array containing NaN/Inf is non-finite
    if CHECK_FINITE and not np.isfinite(data.sum()):
        if np.all(np.isfinite(data)):
            return data
        raise GradientError(f"non-finite values produced by {op}")
    return data


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray, own: bool = False):
        # own=True means g is a freshly allocated array the caller will not
        # reuse, so the first accumulation can adopt it without copying
        if self.grad is None:
            self.grad = g if own else g.copy()
        else:
            self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise GradientError("backward() requires a scalar loss")
        order: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        # clear interior grads so repeated backward() accumulates only into
        # the leaves instead of re-propagating stale sums
        for node in order:
            if node._parents:
                node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _make(data, op, parents, backward, check=True):
    # check=False is for pure data movement (reshape, slicing, gathers) whose
    # output values are a subset of already-guarded inputs
    out = Tensor(_guard(data, op) if check else data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


# -- arithmetic --------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    """a + b; b may be a (C,) bias broadcast over the rows of a (N, C) a."""
    bias = b.data.ndim == 1 and a.data.ndim == 2 and a.data.shape[1] == b.data.shape[0]
    if not bias and a.data.shape != b.data.shape:
        raise GradientError(f"add shape mismatch {a.data.shape} vs {b.data.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g, own=True)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0) if bias else g, own=bias)

    return _make(a.data + b.data, "add", (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def backward(g):
        a._accumulate(s * g, own=True)

    return _make(s * a.data, "scale", (a,), backward)


def shift(a: Tensor, c: float) -> Tensor:
    """a + constant scalar."""
    c = float(c)

    def backward(g):
        a._accumulate(g, own=True)

    return _make(a.data + c, "shift", (a,), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise GradientError(f"mul shape mismatch {a.data.shape} vs {b.data.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * b.data, own=True)
        if b.requires_grad:
            b._accumulate(g * a.data, own=True)

    return _make(a.data * b.data, "mul", (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            # contiguous operands keep the GEMM on its fast path
            a._accumulate(g @ np.ascontiguousarray(b.data.T), own=True)
        if b.requires_grad:
            b._accumulate((g.T @ a.data).T, own=True)

    return _make(a.data @ b.data, "matmul", (a, b), backward)


def sparse_matmul(m, a: Tensor) -> Tensor:
    """m @ a with m a constant scipy sparse matrix; gradient flows to a only."""
    if not sp.issparse(m):
        raise GradientError("sparse_matmul needs a scipy sparse matrix")

    def backward(g):
        a._accumulate(m.T @ g, own=True)

    return _make(m @ a.data, "sparse_matmul", (a,), backward)


# -- shape -------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def backward(g):
        a._accumulate(g.reshape(a.data.shape), own=True)

    return _make(a.data.reshape(shape), "reshape", (a,), backward, check=False)


def concat(tensors, axis=0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)], own=True)

    return _make(np.concatenate([t.data for t in tensors], axis=axis),
                 "concat", tensors, backward, check=False)


def gather_rows(a: Tensor, indices) -> Tensor:
    indices = np.asarray(indices, dtype=np.int64)

    def backward(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, indices, g)
        a._accumulate(acc, own=True)

    return _make(a.data[indices], "gather_rows", (a,), backward, check=False)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def backward(g):
        acc = np.zeros_like(a.data)
        acc[:, start:stop] = g
        a._accumulate(acc, own=True)

    return _make(a.data[:, start:stop].copy(), "slice_cols", (a,), backward, check=False)


# -- nonlinearities ----------------------------------------------------------

def elu(a: Tensor) -> Tensor:
    # exp(min(x, 0)) is 1 on the positive side and elu'(x) on the negative
    # side, so one vectorised exp yields the derivative as a byproduct.
    deriv = np.exp(np.minimum(a.data, 0.0))
    out = np.where(a.data > 0.0, a.data, deriv - 1.0)

    def backward(g):
        g = np.multiply(g, deriv, out=g if g.flags.writeable else None)
        a._accumulate(g, own=True)

    return _make(out, "elu", (a,), backward, check=False)


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0

    def backward(g):
        a._accumulate(g * pos, own=True)

    return _make(np.where(pos, a.data, 0.0), "relu", (a,), backward, check=False)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def backward(g):
        a._accumulate(g * out, own=True)

    return _make(out, "exp", (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(g / a.data, own=True)

    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(a.data)   # non-finite values trip the graph guard below
    return _make(out, "log", (a,), backward)


def square(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(2.0 * a.data * g, own=True)

    return _make(a.data * a.data, "square", (a,), backward)


# -- reductions --------------------------------------------------------------

def total(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(np.full(a.data.shape, float(g)), own=True)

    return _make(a.data.sum(), "sum", (a,), backward)


def mean(a: Tensor) -> Tensor:
    n = a.data.size

    def backward(g):
        a._accumulate(np.full(a.data.shape, float(g) / n), own=True)

    return _make(a.data.mean(), "mean", (a,), backward)


# -- optimiser ---------------------------------------------------------------

class Adam:
    """Adam with bias correction over a list of parameter Tensors."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self._buf = [np.empty_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v, buf in zip(self.params, self.m, self.v, self._buf):
            g = p.grad
            if g is None:
                continue
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=buf)
            m += buf
            v *= self.beta2
            np.multiply(g, g, out=buf)
            buf *= 1.0 - self.beta2
            v += buf
            np.divide(v, c2, out=buf)
            np.sqrt(buf, out=buf)
            buf += self.eps
            np.divide(m, buf, out=buf)
            buf *= self.lr / c1
            p.data -= buf

    def state(self) -> dict:
        return {"t": self.t, "m": [m.copy() for m in self.m],
                "v": [v.copy() for v in self.v]}

    def load_state(self, state: dict):
        self.t = int(state["t"])
        for m, s in zip(self.m, state["m"]):
            m[...] = s
        for v, s in zip(self.v, state["v"]):
            v[...] = s


# -- verification ------------------------------------------------------------

def grad_check(fn, params, eps=1e-5, abs_floor=1e-6, max_coords=25, seed=0):
    """Compare analytic gradients of fn() against central differences.

    fn rebuilds its graph from params on every call and returns a scalar
    Tensor. At most max_coords coordinates per parameter are probed (chosen
    with the given seed). Returns the worst relative error; coordinates where
    both gradients are below abs_floor are treated as agreeing.
    """
    for p in params:
        p.grad = None
    loss = fn()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        for i in coords:
            keep = flat[i]
            flat[i] = keep + eps
            hi = float(fn().data)
            flat[i] = keep - eps
            lo = float(fn().data)
            flat[i] = keep
            numeric = (hi - lo) / (2.0 * eps)
            ana = a.reshape(-1)[i]
            denom = max(abs(ana), abs(numeric))
            if denom < abs_floor:
                continue
            worst = max(worst, abs(ana - numeric) / denom)
    return worst
