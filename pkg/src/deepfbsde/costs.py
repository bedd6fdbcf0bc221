"""Quadratic state costs and the saturated (sigmoid-integral) control cost.

The running state cost is qbar(x) = 0.5 (x-xbar)^T Q (x-xbar) + p(x) with p a
penalty from `penalties`; the terminal cost swaps Q for Q_N (and includes the
penalty only when the spec says so). The control cost is the convex
antiderivative of the inverse saturation,

    r(u) = sum_i c_i [ (m_i+u_i) ln(m_i+u_i) + (m_i-u_i) ln(m_i-u_i)
                       - 2 m_i ln m_i ],    m_i = u_max_i,

which blows up at the saturation boundary and reduces to (c_i/m_i) u_i^2 for
small u. On-tape code never forms r(u) directly: with u = m tanh(z/2) the
substitution m+u = 2m sigma(z), m-u = 2m sigma(-z) gives

    r = sum_i 2 m_i c_i [ ln 2 - sigma(z) softplus(-z) - sigma(-z) softplus(z) ],

which stays finite at float saturation (`control_cost_z`).
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import ops
from .errors import DomainError


class CostSpec:
    """Q, Q_N (n, n) PSD; R diagonal entries (m,) positive; target xbar (n,);
    u_max (m,) positive saturation levels."""

    def __init__(self, Q, Q_terminal, R, target, u_max, terminal_penalty: bool = False):
        self.Q = np.atleast_2d(np.asarray(Q, float))
        self.Q_terminal = np.atleast_2d(np.asarray(Q_terminal, float))
        self.R = np.asarray(R, float).reshape(-1)
        self.target = np.asarray(target, float).reshape(-1)
        self.u_max = np.asarray(u_max, float).reshape(-1)
        self.terminal_penalty = bool(terminal_penalty)
        n = self.target.size
        if self.Q.shape != (n, n) or self.Q_terminal.shape != (n, n):
            raise ValueError("Q/Q_terminal must be n x n with n = len(target)")
        if np.any(self.R <= 0.0):
            raise ValueError("R diagonal entries must be positive")
        if np.any(self.u_max <= 0.0):
            raise ValueError("u_max must be positive")

    @property
    def n(self) -> int:
        return self.target.size

    @property
    def m(self) -> int:
        return self.R.size


def quad_cost(x, Q: np.ndarray, target: np.ndarray):
    """0.5 (x-target)^T Q (x-target) batched -> (M, 1)."""
    return ops.quadcost(x, 0.5 * np.asarray(Q, float), target)


def state_cost(x, spec: CostSpec, pen=None):
    """Running state cost qbar(x) = quadratic + penalty, (M, 1), >= 0."""
    q = quad_cost(x, spec.Q, spec.target)
    if pen is not None:
        from .penalties import penalty  # noqa: PLC0415 (cycle)

        q = q + penalty(x, pen)
    return q


def terminal_cost(x, spec: CostSpec, pen=None):
    """Terminal cost q_N(x), (M, 1); includes the penalty only if
    spec.terminal_penalty is set."""
    q = quad_cost(x, spec.Q_terminal, spec.target)
    if pen is not None and spec.terminal_penalty:
        from .penalties import penalty  # noqa: PLC0415

        q = q + penalty(x, pen)
    return q


def control_cost(u, spec: CostSpec) -> np.ndarray:
    """r(u) closed form, ndarray only; |u_i| must be strictly inside u_max."""
    u = np.atleast_2d(np.asarray(u, float))
    m = spec.u_max
    if np.any(np.abs(u) >= m):
        raise DomainError("control_cost is infinite at or beyond saturation")
    c = spec.R
    terms = (m + u) * np.log(m + u) + (m - u) * np.log(m - u) - 2.0 * m * np.log(m)
    return np.sum(c * terms, axis=1, keepdims=True)


def control_cost_z(z, spec: CostSpec):
    """r(u) evaluated from the preactivation z (u = u_max tanh(z/2)): with
    s = sig(z), r = sum_i 2 u_max_i c_i [ln2 - s softplus(-z) - (1-s)
    softplus(z)]_i, finite and stable at any z; (M, 1)."""
    return ops.satcost(z, spec.u_max, spec.R)


def control_cost_grad(u, spec: CostSpec) -> np.ndarray:
    """dr/du = c_i sig^{-1}(u_i / u_max_i) = 2 c_i atanh(u_i / u_max_i)."""
    u = np.atleast_2d(np.asarray(u, float))
    return 2.0 * spec.R * np.arctanh(u / spec.u_max)
