"""Optimizers for the two training phases.

Adam drives MLE pretraining; RMSProp drives the adversarial phase (the
classic pairing for weight-clipped Wasserstein critics at lr 5e-5).
Steps update parameters in place; grads are cleared only by an explicit
``zero_grads`` call.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

DEFAULT_LR = 5e-5


class MissingGradientError(RuntimeError):
    """A parameter reached optimizer_step without a populated grad."""


def zero_grads(params: dict[str, Tensor]) -> None:
    for t in params.values():
        t.grad = None


def _check_grads(params: dict[str, Tensor]) -> None:
    missing = [name for name, t in params.items() if t.grad is None]
    if missing:
        raise MissingGradientError("missing gradients for: " + ", ".join(missing))


class Adam:
    """Adaptive-moment estimation with bias correction."""

    kind = "adaptive-moment"

    def __init__(self, lr: float = DEFAULT_LR, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor]) -> None:
        _check_grads(params)
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, p in params.items():
            g = p.grad
            m = self._m.setdefault(name, np.zeros_like(p.data))
            v = self._v.setdefault(name, np.zeros_like(p.data))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class RMSProp:
    """Mean-square gradient scaling, no momentum."""

    kind = "rms-propagation"

    def __init__(self, lr: float = DEFAULT_LR, rho: float = 0.9, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.step_count = 0
        self._sq: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor]) -> None:
        _check_grads(params)
        self.step_count += 1
        for name, p in params.items():
            g = p.grad
            s = self._sq.setdefault(name, np.zeros_like(p.data))
            s *= self.rho
            s += (1.0 - self.rho) * g * g
            p.data -= self.lr * g / (np.sqrt(s) + self.eps)
