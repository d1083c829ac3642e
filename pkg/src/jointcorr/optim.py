"""AdamW with decoupled weight decay, operating on numpy arrays in place."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DivergenceError(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def like(cls, param: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(param, dtype=np.float64), np.zeros_like(param, dtype=np.float64))


def adamw_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float,
               betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
               weight_decay: float = 1e-2) -> np.ndarray:
    """One AdamW update of ``param`` (modified in place and returned)."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != param.shape:
        raise ValueError(f"grad shape {grad.shape} != param shape {param.shape}")
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("diverged: non-finite gradient")
    b1, b2 = betas
    state.step += 1
    param *= 1.0 - lr * weight_decay
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * grad * grad
    m_hat = state.m / (1.0 - b1 ** state.step)
    v_hat = state.v / (1.0 - b2 ** state.step)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return param


@dataclass
class AdamW:
    """Per-parameter AdamW states for a fixed list of named arrays."""
    lr: float
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-2
    states: dict = field(default_factory=dict)

    def step(self, named: dict[str, tuple[np.ndarray, np.ndarray]]):
        for name, (param, grad) in named.items():
            state = self.states.setdefault(name, AdamState.like(param))
            adamw_step(param, grad, state, self.lr, self.betas, self.eps, self.weight_decay)
