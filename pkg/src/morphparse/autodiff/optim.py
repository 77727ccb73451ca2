from __future__ import annotations

from typing import Dict, Iterable, List

import numpy as np

from .core import Parameter


class Adam:
    """ADAM with bias correction. L2 enters as ``grad + l2_rate * param``."""

    def __init__(self, params: Iterable[Parameter], lr: float = 0.002, beta1: float = 0.9,
                 beta2: float = 0.9, eps: float = 1e-8):
        self.params: List[Parameter] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("Adam needs uniquely named parameters")

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1**t
        correction2 = 1.0 - self.beta2**t
        for p in self.params:
            grad = p.grad if p.grad is not None else np.zeros_like(p.value)
            if p.l2_rate:
                grad = grad + p.l2_rate * p.value
            m = self.m.get(p.name)
            if m is None:
                m = self.m[p.name] = np.zeros_like(p.value)
                self.v[p.name] = np.zeros_like(p.value)
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            m_hat = m / correction1
            v_hat = v / correction2
            p.value -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.value.dtype, copy=False)

    def state_dict(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step_count": self.step_count,
            "m": {k: v.copy() for k, v in self.m.items()},
            "v": {k: v.copy() for k, v in self.v.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        self.lr = state["lr"]
        self.beta1 = state["beta1"]
        self.beta2 = state["beta2"]
        self.eps = state["eps"]
        self.step_count = state["step_count"]
        self.m = {k: np.array(v) for k, v in state["m"].items()}
        self.v = {k: np.array(v) for k, v in state["v"].items()}

