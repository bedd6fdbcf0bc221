"""Shared test helpers: finite-difference oracles and small factories."""

from __future__ import annotations

import numpy as np
import pytest

from deepfbsde.autodiff import Tape


def fd_scalar(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar f at array x, elementwise."""
    x = np.asarray(x, float)
    g = np.zeros(x.size)
    flat = x.reshape(-1)
    for i in range(flat.size):
        v = flat[i]
        step = h * max(1.0, abs(v))
        flat[i] = v + step
        fp = f(x)
        flat[i] = v - step
        fm = f(x)
        flat[i] = v
        g[i] = (fp - fm) / (2.0 * step)
    return g.reshape(x.shape)


def fd_params(loss_fn, params, h: float = 2e-5) -> dict:
    """Central finite differences of loss_fn() w.r.t. each Parameter."""
    out = {}
    for p in params:
        flat = p.value.reshape(-1)
        g = np.zeros(flat.size)
        for i in range(flat.size):
            v = flat[i]
            step = h * max(1.0, abs(v))
            flat[i] = v + step
            lp = loss_fn()
            flat[i] = v - step
            lm = loss_fn()
            flat[i] = v
            g[i] = (lp - lm) / (2.0 * step)
        out[p] = g
    return out


def max_rel(analytic: dict, fd: dict, params, floor: float = 1e-8) -> float:
    """Worst relative gradient error, ignoring sub-floor absolute noise."""
    worst = 0.0
    for p in params:
        g = analytic.get(p)
        a = (np.zeros(p.value.size) if g is None
             else np.asarray(g, float).reshape(p.value.size))
        diff = np.abs(a - fd[p])
        rel = np.where(diff <= floor, 0.0,
                       diff / np.maximum(np.abs(fd[p]), floor))
        worst = max(worst, float(rel.max()))
    return worst


def grad_of(build, x: np.ndarray) -> tuple[float, np.ndarray]:
    """(value, dvalue/dx) of scalar-valued tape function build(tape, xvar)."""
    tape = Tape()
    xv = tape.leaf(np.asarray(x, float), diff=True)
    out = build(tape, xv)
    (g,) = tape.grad(out, [xv])
    return out.value.item(), g


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
