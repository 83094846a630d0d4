"""Adam optimizer."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .tensor import Tensor


class Adam:
    def __init__(self, params: "OrderedDict[str, Tensor]", lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, trainable=None):
        """Apply one update to every parameter with a gradient.

        ``trainable`` optionally restricts the update to a set of names.
        """
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            if p.grad is None or (trainable is not None and name not in trainable):
                continue
            g = p.grad.astype(p.dtype, copy=False)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = p.data - (self.lr * update).astype(p.dtype)

    def state_arrays(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for name in self.params:
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays, step_count: int):
        for name in self.params:
            self.m[name] = np.array(arrays[f"adam.m.{name}"], dtype=self.params[name].dtype)
            self.v[name] = np.array(arrays[f"adam.v.{name}"], dtype=self.params[name].dtype)
        self.step_count = int(step_count)
