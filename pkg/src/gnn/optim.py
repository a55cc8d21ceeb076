"""Adam optimizer over a dict of named tensors."""
from typing import Dict

import numpy as np


class Adam:
    """Bias-corrected Adam; moments live on the optimizer, keyed by tensor name."""

    def __init__(self, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """Update `params` in place."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        step_size = self.lr / bc1

        for name, value in params.items():
            g = grads[name]
            if g.shape != value.shape:
                raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {value.shape}")
            if name not in self.m:
                self.m[name] = np.zeros_like(value)
                self.v[name] = np.zeros_like(value)
            self.m[name] *= self.beta1
            self.m[name] += (1.0 - self.beta1) * g
            self.v[name] *= self.beta2
            self.v[name] += (1.0 - self.beta2) * (g * g)
            value -= step_size * self.m[name] / (np.sqrt(self.v[name] / bc2) + self.eps)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: Adam, lr: float) -> Dict[str, np.ndarray]:
    state.lr = lr
    state.step(params, grads)
    return params
