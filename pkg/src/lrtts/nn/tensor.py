"""Reverse-mode autodiff on float64 numpy arrays.

Small tape-based engine: every operation returns a new :class:`Tensor`
holding its inputs and a backward closure.  Graphs are built per forward
pass and freed after ``backward()``; parameters accumulate gradients
across graphs until ``zero_grad``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

__all__ = [
    "Tensor",
    "Parameter",
    "as_tensor",
    "concat",
    "matmul",
    "softmax",
    "conv1d",
    "embedding_lookup",
    "gather_frames",
]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: tuple, backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        req = any(p.requires_grad for p in parents)
        out.requires_grad = req
        out._parents = parents if req else ()
        out._backward = backward if req else None
        return out

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += _unbroadcast(g, self.data.shape)

    def backward(self, grad: np.ndarray | None = None, free_graph: bool = True) -> None:
        """Backpropagate from this node; seeds with ones unless ``grad`` given."""
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=np.float64)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
        if free_graph:
            for node in topo:
                if not isinstance(node, Parameter):
                    node._backward = None
                    node._parents = ()
                    if node is not self:
                        node.grad = None

    # -- conveniences --------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- elementwise arithmetic ----------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor._make(self.data + other.data, (self, other), None)
        if out.requires_grad:
            def backward(g, a=self, b=other):
                a._accum(g)
                b._accum(g)
            out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor._make(-self.data, (self,), None)
        if out.requires_grad:
            out._backward = lambda g, a=self: a._accum(-g)
        return out

    def __sub__(self, other):
        other = as_tensor(other)
        out = Tensor._make(self.data - other.data, (self, other), None)
        if out.requires_grad:
            def backward(g, a=self, b=other):
                a._accum(g)
                b._accum(-g)
            out._backward = backward
        return out

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor._make(self.data * other.data, (self, other), None)
        if out.requires_grad:
            def backward(g, a=self, b=other):
                a._accum(g * b.data)
                b._accum(g * a.data)
            out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor._make(self.data / other.data, (self, other), None)
        if out.requires_grad:
            def backward(g, a=self, b=other):
                a._accum(g / b.data)
                b._accum(-g * a.data / (b.data * b.data))
            out._backward = backward
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        # basic indexing only: advanced (array) indices would silently drop
        # duplicate contributions in the `+=` backward; use gather ops instead
        for part in key if isinstance(key, tuple) else (key,):
            if isinstance(part, (np.ndarray, list)):
                raise TypeError("advanced indexing unsupported; use gather_frames "
                                "or embedding_lookup")
        out = Tensor._make(self.data[key], (self,), None)
        if out.requires_grad:
            def backward(g, a=self, k=key):
                if a.grad is None:
                    a.grad = np.zeros_like(a.data)
                a.grad[k] += g
            out._backward = backward
        return out

    # -- elementwise nonlinearities --------------------------------------------

    def exp(self):
        y = np.exp(self.data)
        out = Tensor._make(y, (self,), None)
        if out.requires_grad:
            out._backward = lambda g, a=self, v=y: a._accum(g * v)
        return out

    def log(self):
        out = Tensor._make(np.log(self.data), (self,), None)
        if out.requires_grad:
            out._backward = lambda g, a=self: a._accum(g / a.data)
        return out

    def tanh(self):
        y = np.tanh(self.data)
        out = Tensor._make(y, (self,), None)
        if out.requires_grad:
            out._backward = lambda g, a=self, v=y: a._accum(g * (1.0 - v * v))
        return out

    def sigmoid(self):
        y = expit(self.data)
        out = Tensor._make(y, (self,), None)
        if out.requires_grad:
            out._backward = lambda g, a=self, v=y: a._accum(g * v * (1.0 - v))
        return out

    def relu(self):
        mask = self.data > 0
        out = Tensor._make(np.where(mask, self.data, 0.0), (self,), None)
        if out.requires_grad:
            out._backward = lambda g, a=self, m=mask: a._accum(g * m)
        return out

    def leaky_relu(self, alpha: float = 0.2):
        mask = self.data > 0
        out = Tensor._make(np.where(mask, self.data, alpha * self.data), (self,), None)
        if out.requires_grad:
            out._backward = lambda g, a=self, m=mask: a._accum(g * np.where(m, 1.0, alpha))
        return out

    def abs(self):
        out = Tensor._make(np.abs(self.data), (self,), None)
        if out.requires_grad:
            out._backward = lambda g, a=self, s=np.sign(self.data): a._accum(g * s)
        return out

    def square(self):
        out = Tensor._make(self.data * self.data, (self,), None)
        if out.requires_grad:
            out._backward = lambda g, a=self: a._accum(2.0 * g * a.data)
        return out

    def clip_min(self, floor: float):
        """max(x, floor); subgradient 0 where the floor is active."""
        mask = self.data > floor
        out = Tensor._make(np.where(mask, self.data, floor), (self,), None)
        if out.requires_grad:
            out._backward = lambda g, a=self, m=mask: a._accum(g * m)
        return out

    # -- reductions / shape ------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), None)
        if out.requires_grad:
            def backward(g, a=self, ax=axis, kd=keepdims):
                if ax is not None and not kd:
                    g = np.expand_dims(g, ax)
                a._accum(np.broadcast_to(g, a.data.shape))
            out._backward = backward
        return out

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor._make(self.data.reshape(shape), (self,), None)
        if out.requires_grad:
            out._backward = lambda g, a=self: a._accum(g.reshape(a.data.shape))
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        out = Tensor._make(self.data.transpose(axes), (self,), None)
        if out.requires_grad:
            out._backward = lambda g, a=self, iv=inv: a._accum(g.transpose(iv))
        return out

    def broadcast_to(self, shape):
        out = Tensor._make(np.broadcast_to(self.data, shape), (self,), None)
        if out.requires_grad:
            out._backward = lambda g, a=self: a._accum(g)
        return out


class Parameter(Tensor):
    """Trainable leaf tensor; spared when backward frees the graph."""

    __slots__ = ()

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._make(np.matmul(a.data, b.data), (a, b), None)
    if out.requires_grad:
        def backward(g, a=a, b=b):
            a._accum(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape))
            b._accum(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape))
        out._backward = backward
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), None)
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def backward(g, ts=tensors, off=offsets, ax=axis):
            for t, lo, hi in zip(ts, off[:-1], off[1:]):
                idx = [slice(None)] * g.ndim
                idx[ax] = slice(lo, hi)
                t._accum(g[tuple(idx)])
        out._backward = backward
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor._make(y, (x,), None)
    if out.requires_grad:
        def backward(g, a=x, v=y, ax=axis):
            dot = (g * v).sum(axis=ax, keepdims=True)
            a._accum(v * (g - dot))
        out._backward = backward
    return out


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1) -> Tensor:
    """Length-preserving 1-D convolution over time with left-anchored padding.

    ``x``: (B, T, Cin), ``w``: (K, Cin, Cout).  Output length is
    ceil(T / stride); window j reads x[j*stride - (K-1)//2 : ... + K] with
    zero padding, so valid outputs are identical whether a sequence is run
    alone or right-padded inside a batch.
    """
    x, w = as_tensor(x), as_tensor(w)
    B, T, Cin = x.data.shape
    K, _, Cout = w.data.shape
    t_out = -(-T // stride)
    pl = (K - 1) // 2
    pr = max(0, (t_out - 1) * stride + K - pl - T)
    xp = np.pad(x.data, ((0, 0), (pl, pr), (0, 0)))
    starts = np.arange(t_out) * stride
    idx = starts[:, None] + np.arange(K)[None, :]  # (t_out, K)
    patches = xp[:, idx, :]  # (B, t_out, K, Cin)
    flat = patches.reshape(B, t_out, K * Cin)
    y = np.matmul(flat, w.data.reshape(K * Cin, Cout))
    if b is not None:
        b = as_tensor(b)
        y = y + b.data
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor._make(y, parents, None)
    if out.requires_grad:
        def backward(g, x=x, w=w, b=b, flat=flat, idx=idx, pl=pl, pr=pr,
                     B=B, T=T, K=K, Cin=Cin, Cout=Cout, t_out=t_out, stride=stride):
            gw = np.matmul(flat.reshape(B * t_out, K * Cin).T, g.reshape(B * t_out, Cout))
            w._accum(gw.reshape(K, Cin, Cout))
            if b is not None:
                b._accum(g.sum(axis=(0, 1)))
            if x.requires_grad:
                dpatch = np.matmul(g, w.data.reshape(K * Cin, Cout).T).reshape(B, t_out, K, Cin)
                gxp = np.zeros((B, T + pl + pr, Cin))
                if stride == 1:
                    for k in range(K):  # window k covers the contiguous slice k..k+t_out
                        gxp[:, k:k + t_out, :] += dpatch[:, :, k, :]
                else:
                    for k in range(K):
                        gxp[:, idx[:, k], :] += dpatch[:, :, k, :]
                x._accum(gxp[:, pl:pl + T, :])
        out._backward = backward
    return out


def embedding_lookup(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: out[..., :] = weight[ids[...], :]."""
    weight = as_tensor(weight)
    ids = np.asarray(ids)
    out = Tensor._make(weight.data[ids], (weight,), None)
    if out.requires_grad:
        def backward(g, w=weight, ids=ids):
            if w.grad is None:
                w.grad = np.zeros_like(w.data)
            np.add.at(w.grad, ids, g)
        out._backward = backward
    return out


def gather_frames(x: Tensor, idx: np.ndarray) -> Tensor:
    """Per-batch row gather: out[b, t, :] = x[b, idx[b, t], :]."""
    x = as_tensor(x)
    idx = np.asarray(idx)
    B = x.data.shape[0]
    brow = np.arange(B)[:, None]
    out = Tensor._make(x.data[brow, idx], (x,), None)
    if out.requires_grad:
        def backward(g, a=x, idx=idx, brow=brow):
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, (brow, idx), g)
        out._backward = backward
    return out
