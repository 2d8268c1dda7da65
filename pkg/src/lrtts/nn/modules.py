"""Neural layers on top of the autodiff engine.

Sequence layers take (B, T, C) tensors with optional per-sequence lengths;
right-padded positions are masked so results match running each sequence
alone.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .recurrent import gru_sequence, lstm_sequence
from .tensor import (Tensor, Parameter, concat, conv1d, embedding_lookup,
                     gather_frames, matmul)


class Module:
    """Parameter container with named traversal and train/eval state."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def parameters(self) -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for name, p in self._params.items():
            out[name] = p
        for name, mod in self._modules.items():
            for sub, p in mod.parameters().items():
                out[f"{name}.{sub}"] = p
        return out

    def train(self, mode: bool = True) -> "Module":
        object.__setattr__(self, "training", mode)
        for mod in self._modules.values():
            mod.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) ^ set(state)
        if missing:
            raise KeyError(f"parameter name mismatch: {sorted(missing)}")
        for name, p in params.items():
            if p.data.shape != state[name].shape:
                raise ValueError(f"shape mismatch for '{name}': "
                                 f"{p.data.shape} vs {state[name].shape}")
            p.data = np.array(state[name], dtype=np.float64)

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def checksum(self, prefix: str = "") -> str:
        """SHA-256 over the raw bytes of all (or prefix-matching) parameters."""
        h = hashlib.sha256()
        for name in sorted(self.parameters()):
            if name.startswith(prefix):
                p = self.parameters()[name]
                h.update(name.encode())
                h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for mod in modules:
            self.append(mod)

    def append(self, mod: Module) -> None:
        self._modules[str(len(self._items))] = mod
        self._items.append(mod)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True):
        super().__init__()
        bound = 1.0 / np.sqrt(in_features)
        self.weight = Parameter(_uniform(rng, (in_features, out_features), bound))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class Conv1d(Module):
    """Same-length (per stride) 1-D convolution, (B, T, Cin) -> (B, ceil(T/s), Cout).

    He-initialized: the conv stacks here run without normalization layers,
    so the init must preserve activation variance through ReLUs.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, bias: bool = True):
        super().__init__()
        std = np.sqrt(2.0 / (kernel_size * in_channels))
        self.weight = Parameter(
            rng.standard_normal((kernel_size, in_channels, out_channels)) * std)
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias, stride=self.stride)


class Embedding(Module):
    def __init__(self, num_embeddings: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter(_uniform(rng, (num_embeddings, dim), 1.0 / np.sqrt(dim)))

    def __call__(self, ids: np.ndarray) -> Tensor:
        return embedding_lookup(self.weight, ids)


class Dropout(Module):
    """Inverted dropout; identity in eval mode. Draws from the shared model rng."""

    def __init__(self, p: float, rng: np.random.Generator):
        super().__init__()
        self.p = p
        self.rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        if not self.training or self.p <= 0.0:
            return x
        keep = (self.rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * Tensor(keep)


class LSTM(Module):
    """Single-direction LSTM returning the full output sequence.

    With ``reverse=True`` iterates from the last frame toward the first;
    padded steps (t >= length) carry state through unchanged, so outputs on
    valid frames equal the unbatched computation.
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        super().__init__()
        # variance-preserving input weights and a unit forget bias: stacked
        # LSTMs otherwise attenuate their input several-fold at init, starving
        # everything upstream of gradient
        self.w_x = Parameter(_uniform(rng, (input_size, 4 * hidden_size),
                                      np.sqrt(3.0 / input_size)))
        self.w_h = Parameter(_uniform(rng, (hidden_size, 4 * hidden_size),
                                      1.0 / np.sqrt(hidden_size)))
        bias = np.zeros(4 * hidden_size)
        bias[hidden_size:2 * hidden_size] = 1.0
        self.bias = Parameter(bias)
        self.hidden_size = hidden_size

    def __call__(self, x: Tensor, lengths: np.ndarray | None = None,
                 reverse: bool = False) -> Tensor:
        return lstm_sequence(x, self.w_x, self.w_h, self.bias, lengths, reverse)


class BiLSTM(Module):
    """Bidirectional LSTM; output width = 2 * hidden_size (per-direction)."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        super().__init__()
        self.fwd = LSTM(input_size, hidden_size, rng)
        self.bwd = LSTM(input_size, hidden_size, rng)

    def __call__(self, x: Tensor, lengths: np.ndarray | None = None) -> Tensor:
        return concat([self.fwd(x, lengths), self.bwd(x, lengths, reverse=True)], axis=2)


class GRU(Module):
    """Single-direction GRU returning the full output sequence."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        super().__init__()
        bound = 1.0 / np.sqrt(hidden_size)
        self.w_x = Parameter(_uniform(rng, (input_size, 3 * hidden_size), bound))
        self.w_h = Parameter(_uniform(rng, (hidden_size, 3 * hidden_size), bound))
        self.bias_x = Parameter(np.zeros(3 * hidden_size))
        self.bias_h = Parameter(np.zeros(3 * hidden_size))
        self.hidden_size = hidden_size

    def __call__(self, x: Tensor, lengths: np.ndarray | None = None) -> Tensor:
        return gru_sequence(x, self.w_x, self.w_h, self.bias_x, self.bias_h,
                            lengths)

    def last_output(self, x: Tensor, lengths: np.ndarray | None = None) -> Tensor:
        """State after the last valid step of each sequence, shape (B, H)."""
        out = self(x, lengths)
        B, T, H = out.shape
        if lengths is None:
            return out[:, T - 1, :]
        idx = (np.asarray(lengths) - 1)[:, None]  # (B, 1)
        return gather_frames(out, idx).reshape(B, H)


class SpectralNorm(Module):
    """Spectral normalization wrapper for Linear or Conv1d weights.

    One power iteration per training forward updates the singular-vector
    estimates (held constant for gradients, as is conventional); eval mode
    reuses the stored estimates.
    """

    def __init__(self, layer: Module, rng: np.random.Generator, iterations: int = 1):
        super().__init__()
        self.layer = layer
        self.iterations = iterations
        rows = self._matrix(layer.weight.data).shape[0]
        u = rng.standard_normal(rows)
        self.u = u / np.linalg.norm(u)
        self.v = None

    @staticmethod
    def _matrix(w: np.ndarray) -> np.ndarray:
        # conv weight (K, Cin, Cout) -> (Cout, K*Cin); linear (In, Out) -> (Out, In)
        if w.ndim == 3:
            return w.reshape(-1, w.shape[-1]).T
        return w.T

    def _sigma(self) -> Tensor:
        w = self.layer.weight
        mat = self._matrix(w.data)
        if self.training or self.v is None:
            u = self.u
            for _ in range(self.iterations):
                v = mat.T @ u
                v = v / max(np.linalg.norm(v), 1e-12)
                u = mat @ v
                u = u / max(np.linalg.norm(u), 1e-12)
            self.u, self.v = u, v
        # sigma = u^T W v as a differentiable function of W (u, v constant)
        if w.data.ndim == 3:
            K, Cin, Cout = w.data.shape
            wv = matmul(w.reshape(K * Cin, Cout).transpose(1, 0), Tensor(self.v[:, None]))
        else:
            wv = matmul(w.transpose(1, 0), Tensor(self.v[:, None]))
        return (Tensor(self.u[:, None]) * wv).sum()

    def normalized_weight(self) -> np.ndarray:
        sigma = float(self._sigma().data)
        return self.layer.weight.data / sigma

    def __call__(self, x: Tensor) -> Tensor:
        sigma = self._sigma()
        w = self.layer.weight
        w_sn = w * (1.0 / sigma)
        if isinstance(self.layer, Conv1d):
            return conv1d(x, w_sn, self.layer.bias, stride=self.layer.stride)
        y = matmul(x, w_sn)
        if self.layer.bias is not None:
            y = y + self.layer.bias
        return y
