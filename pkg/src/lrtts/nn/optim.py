"""Adam optimizer with bias correction and global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter

__all__ = ["Adam", "OptimizerError"]


class OptimizerError(RuntimeError):
    pass


class Adam:
    """Standard Adam over a named parameter dict.

    Defaults follow the training setup used throughout the pipeline:
    beta1=0.9, beta2=0.98, eps=1e-8, gradients clipped to global norm 1.0.
    """

    def __init__(self, params: dict[str, Parameter], beta1: float = 0.9,
                 beta2: float = 0.98, eps: float = 1e-8, clip_norm: float | None = 1.0):
        self.params = dict(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self, lr: float, frozen: set[str] | frozenset[str] = frozenset()) -> None:
        """Apply one update; parameters with no gradient or in ``frozen`` are skipped.

        Raises:
            OptimizerError: if any participating gradient is non-finite.
        """
        active = {k: p for k, p in self.params.items()
                  if k not in frozen and p.grad is not None}
        for name, p in active.items():
            if not np.all(np.isfinite(p.grad)):
                raise OptimizerError(f"non-finite gradient for parameter '{name}'")
        scale = 1.0
        if self.clip_norm is not None and active:
            total = np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in active.values()))
            if total > self.clip_norm:
                scale = self.clip_norm / total
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in active.items():
            g = p.grad * scale
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state(self) -> dict[str, np.ndarray]:
        out = {"__step__": np.array([self.step_count], dtype=np.int64)}
        for k in self.params:
            out[f"m.{k}"] = self.m[k].copy()
            out[f"v.{k}"] = self.v[k].copy()
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        self.step_count = int(state["__step__"][0])
        for k in self.params:
            self.m[k] = np.array(state[f"m.{k}"])
            self.v[k] = np.array(state[f"v.{k}"])
