"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor


class Adam:
    """Standard Adam with bias correction.

    Holds first/second moment accumulators per parameter, shaped like the
    parameter itself. Updates are deterministic given parameters and
    gradients; the step counter increases by exactly one per ``step()``.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, grad_scale: float = 1.0) -> None:
        """Apply one Adam update using each parameter's accumulated gradient.

        ``grad_scale`` divides accumulated gradients (per-batch averaging
        when example losses were summed, not averaged).
        """
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                g = np.zeros_like(p.data)
            else:
                if p.grad.shape != p.data.shape:
                    raise ShapeError(
                        f"adam: gradient shape {p.grad.shape} does not match "
                        f"parameter {name} shape {p.data.shape}")
                g = p.grad / grad_scale if grad_scale != 1.0 else p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / bias1
            v_hat = v / bias2
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)
