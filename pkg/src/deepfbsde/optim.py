"""Adam with global-norm gradient clipping.

Bias-corrected Adam (step count starts at 1), one shared scalar clip: if the
global L2 norm of all gradients exceeds `clip_norm`, every gradient is scaled
by clip_norm/norm before the moment updates. The inner update runs through
the kernel backend.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter
from .autodiff.backends import kernels


class Adam:
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 clip_norm: float | None = 10.0):
        self.params: list[Parameter] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self._m = [np.zeros(p.value.size) for p in self.params]
        self._v = [np.zeros(p.value.size) for p in self.params]

    def global_norm(self, grads: dict[Parameter, np.ndarray]) -> float:
        s = 0.0
        for p in self.params:
            g = grads.get(p)
            if g is not None:
                gf = np.asarray(g).ravel()
                s += float(np.dot(gf, gf))
        return float(np.sqrt(s))

    def step(self, grads: dict[Parameter, np.ndarray]) -> float:
        """Apply one update; returns the pre-clip global gradient norm."""
        norm = self.global_norm(grads)
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm and norm > 0.0:
            scale = self.clip_norm / norm
        self.t += 1
        for p, m, v in zip(self.params, self._m, self._v):
            g = grads.get(p)
            if g is None:
                g = np.zeros(p.value.size)
            else:
                g = np.asarray(g, dtype=np.float64).ravel()
                if scale != 1.0:
                    g = g * scale
            kernels.adam_update(p.value.reshape(-1), g, m, v, self.t,
                                self.lr, self.beta1, self.beta2, self.eps)
        return norm
