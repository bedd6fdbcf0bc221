"""Linear double integrator, the closed-form sanity environment.

x = [position, velocity], dx = (A x + B u) dt + sigma B dw with
A = [[0, 1], [0, 0]], B = [0, 1]^T. Under quadratic state cost and the
small-control limit of the saturated control cost, the discrete-time Riccati
recursion gives the exact value function, which the learned y0 must match.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import ops
from .base import SdeModel


class DoubleIntegratorModel(SdeModel):
    n = 2
    m = 1

    def __init__(self, noise_scale: float = 0.1):
        self.noise_scale = float(noise_scale)

    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])

    def drift(self, x):
        return ops.stack_cols([x[:, 1], 0.0])

    def gu(self, x, v):
        return ops.stack_cols([0.0, v[:, 0]])

    def gtv(self, x, w):
        return w[:, 1:2]
