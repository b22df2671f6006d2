"""Adam optimizer with parameter groups and coupled weight decay."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Adam:
    """Adam with optional L2 weight decay folded into the gradient.

    ``groups`` maps a group name to ``(params, lr)`` where ``params`` is a
    ``name -> Tensor`` dict.  Parameters whose ``grad`` is ``None`` after a
    backward pass are skipped for that step (their moment state is left
    untouched), which keeps heads that receive no gradient inert instead
    of decaying them toward zero.
    """

    def __init__(
        self,
        groups: dict[str, tuple[dict[str, Tensor], float]],
        *,
        weight_decay: float = 0.0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if not groups:
            raise ValueError("optimizer needs at least one parameter group")
        self.groups = {name: (dict(params), float(lr)) for name, (params, lr) in groups.items()}
        self.weight_decay = float(weight_decay)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self._m: dict[tuple[str, str], np.ndarray] = {}
        self._v: dict[tuple[str, str], np.ndarray] = {}
        self._steps: dict[tuple[str, str], int] = {}

    def zero_grad(self) -> None:
        for params, _ in self.groups.values():
            for p in params.values():
                p.grad = None

    def step(self) -> None:
        for group_name, (params, lr) in self.groups.items():
            for name, p in params.items():
                if p.grad is None:
                    continue
                g = p.grad
                if self.weight_decay:
                    g = g + self.weight_decay * p.data
                key = (group_name, name)
                m = self._m.get(key)
                if m is None:
                    m = np.zeros_like(p.data)
                    self._m[key] = m
                    self._v[key] = np.zeros_like(p.data)
                    self._steps[key] = 0
                v = self._v[key]
                t = self._steps[key] + 1
                self._steps[key] = t
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                m_hat = m / (1.0 - self.beta1**t)
                v_hat = v / (1.0 - self.beta2**t)
                p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)
