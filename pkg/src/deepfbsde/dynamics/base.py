"""Controlled SDE model interface and integrators.

Models describe control-affine dynamics

    dx = (F(x) + G(x) u) dt + Sigma(x) dw,      Sigma(x) = sigma * G(x),

so the noise enters through the control channels (noise dimension equals the
control dimension). Methods take batched states (M, n) and work on tape Vars
or plain ndarrays interchangeably; `em_increment` may fuse the drift, control
and noise terms (the walker shares one mass-matrix solve across all three).

`rk4_step` is a noise-free 4th-order integrator used only as a test oracle
for the deterministic part of the dynamics.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import ops
from ..errors import IntegrationBlowup


class SdeModel:
    n: int  # state dimension
    m: int  # control dimension (= noise dimension)
    noise_scale: float = 1.0

    def drift(self, x):
        """Uncontrolled drift F(x), shape (M, n)."""
        raise NotImplementedError

    def gu(self, x, v):
        """G(x) v for a control-space vector v (M, m) -> (M, n)."""
        raise NotImplementedError

    def gtv(self, x, w):
        """G(x)^T w for a state-space vector w (M, n) -> (M, m)."""
        raise NotImplementedError

    def em_increment(self, x, u, dw, dt, sigma):
        """Full Euler-Maruyama increment (F + G u) dt + sigma G dw.

        G is linear in its vector argument, so control and noise share one
        evaluation: F dt + G (u dt + sigma dw)."""
        return self.drift(x) * dt + self.gu(x, u * dt + sigma * np.asarray(dw, float))

    # ndarray-only helpers (tests, diagnostics)

    def control_matrix(self, x1: np.ndarray) -> np.ndarray:
        """G at a single state, as an (n, m) ndarray."""
        x = np.asarray(x1, float).reshape(1, self.n)
        cols = []
        for j in range(self.m):
            e = np.zeros((1, self.m))
            e[0, j] = 1.0
            cols.append(self.gu(x, e)[0])
        return np.stack(cols, axis=1)

    def diffusion(self, x1: np.ndarray) -> np.ndarray:
        """Sigma = sigma * G at a single state, (n, m)."""
        return self.noise_scale * self.control_matrix(x1)

    def noise_in_control_range(self, x1: np.ndarray, tol: float = 1e-9) -> bool:
        """Check range(Sigma) is contained in range(G) at a state."""
        G = self.control_matrix(x1)
        S = self.diffusion(x1)
        sol, *_ = np.linalg.lstsq(G, S, rcond=None)
        return bool(np.max(np.abs(G @ sol - S)) <= tol * max(1.0, np.max(np.abs(S))))


def em_step(model: SdeModel, x, u, dw, dt: float, sigma: float | None = None,
            step: int | None = None):
    """One Euler-Maruyama step x' = x + (F + G u) dt + Sigma dw.

    On the plain-ndarray path a non-finite result raises IntegrationBlowup
    carrying the step index; on the tape path callers handle divergence
    (they need per-sample masking, not an exception).
    """
    s = model.noise_scale if sigma is None else sigma
    x2 = x + model.em_increment(x, u, dw, dt, s)
    if isinstance(x2, np.ndarray) and not np.all(np.isfinite(x2)):
        raise IntegrationBlowup(f"non-finite state after step {step}", step=step)
    return x2


def rk4_step(f, x: np.ndarray, dt: float) -> np.ndarray:
    """Classic Runge-Kutta step for x' = f(x); test oracle, ndarray only."""
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def whiten(x, center: np.ndarray, scale: np.ndarray):
    """(x - center) / scale, elementwise; works on Vars and ndarrays."""
    return (x - center) * (1.0 / np.asarray(scale, float))


__all__ = ["SdeModel", "em_step", "rk4_step", "whiten", "ops", "IntegrationBlowup"]
