"""Dual-dispatch math: each function accepts tape Vars or plain ndarrays.

Dynamics, costs and penalties are written once against this module; called
with Vars they record onto the tape, called with arrays they are ordinary
numpy (used by evaluation helpers, oracles and the CLI without autodiff
overhead). Mixed arguments are allowed where it makes sense; constants are
attached to the tape node rather than lifted into leaves.
"""

from __future__ import annotations

import numpy as np

from . import _fused
from .backends import kernels
from .tape import Var


def _any_var(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x
    return None


def sin(x):
    return x.tape.unary("sin", x) if isinstance(x, Var) else np.sin(x)


def cos(x):
    return x.tape.unary("cos", x) if isinstance(x, Var) else np.cos(x)


def exp(x):
    return x.tape.unary("exp", x) if isinstance(x, Var) else np.exp(x)


def log(x):
    return x.tape.unary("log", x) if isinstance(x, Var) else np.log(x)


def sqrt(x):
    return x.tape.unary("sqrt", x) if isinstance(x, Var) else np.sqrt(x)


def square(x):
    return x.tape.unary("square", x) if isinstance(x, Var) else np.square(x)


def tanh(x):
    return x.tape.unary("tanh", x) if isinstance(x, Var) else np.tanh(x)


def sigmoid(x):
    return x.tape.unary("sigmoid", x) if isinstance(x, Var) else kernels.sigmoid_fwd(np.asarray(x, float))


def relu(x):
    return x.tape.unary("relu", x) if isinstance(x, Var) else np.maximum(x, 0.0)


def softplus(x):
    return x.tape.unary("softplus", x) if isinstance(x, Var) else kernels.softplus_fwd(np.asarray(x, float))


def rsum(x, axis=None, keepdims=False):
    if isinstance(x, Var):
        return x.tape.sum(x, axis=axis, keepdims=keepdims)
    return np.sum(x, axis=axis, keepdims=keepdims)


def concat(parts, axis=1):
    v = _any_var(*parts)
    if v is None:
        return np.concatenate(parts, axis=axis)
    lifted = [p if isinstance(p, Var) else v.tape.leaf(p) for p in parts]
    return v.tape.concat(lifted, axis)


def stack_cols(cols):
    v = _any_var(*cols)
    if v is None:
        m = next(np.asarray(c).shape[0] for c in cols if np.ndim(c) == 1)
        return np.stack([np.broadcast_to(np.asarray(c, float), (m,)) for c in cols], axis=1)
    return v.tape.stack_cols(cols)


def matmul(a, b):
    v = _any_var(a, b)
    if v is None:
        return np.matmul(a, b)
    return v.tape.matmul(a, b)


def bmv(a, x):
    v = _any_var(a, x)
    if v is None:
        return np.einsum("...ij,...j->...i", a, x)
    return v.tape.bmv(a, x)


def solve(a, b):
    v = _any_var(a, b)
    if v is None:
        return np.linalg.solve(a, np.asarray(b)[..., None])[..., 0]
    return v.tape.solve(a, b)


def reshape(x, shape):
    return x.reshape(shape)


def paste(batch, rows, cols, entries):
    v = _any_var(*(e[4] for e in entries))
    if v is not None:
        return v.tape.paste(batch, rows, cols, entries)
    out = np.zeros((batch, rows, cols))
    for r0, c0, h, w, val in entries:
        val = np.asarray(val, float)
        if val.ndim == 1:
            val = val.reshape(batch, 1, 1)
        elif val.ndim == 0:
            val = val.reshape(1, 1, 1)
        elif val.ndim == 2:
            val = val.reshape(1, h, w)
        out[:, r0 : r0 + h, c0 : c0 + w] += val
    return out


def stopgrad(x):
    return x.tape.leaf(x.value) if isinstance(x, Var) else x


def guard(x, dead):
    if isinstance(x, Var):
        return x.tape.guard(x, dead)
    out = np.array(x, copy=True)
    out[np.asarray(dead, bool)] = 0.0
    return out


def value(x) -> np.ndarray:
    """Underlying ndarray of a Var, or the array itself."""
    return x.value if isinstance(x, Var) else np.asarray(x)


# ---------------- fused ops ----------------


def features(x, center, inv_scale, tfrac):
    """[whitened x | tfrac column], (M, n+1)."""
    if isinstance(x, Var):
        return x.tape.features(x, center, inv_scale, tfrac)
    return _fused.features(np.asarray(x, float), center, inv_scale, tfrac)


def affine(x, W, b):
    """x @ W + b."""
    if isinstance(x, Var):
        return x.tape.affine(x, W, b)
    return np.matmul(x, value(W)) + value(b)


def sat(z, scale):
    """scale * tanh(z/2): saturated control from the preactivation."""
    if isinstance(z, Var):
        return z.tape.sat(z, scale)
    return _fused.sat(np.asarray(z, float), np.asarray(scale, float))


def satcost(z, u_max, R):
    """Row-summed saturated-control running cost, (M, 1)."""
    if isinstance(z, Var):
        return z.tape.satcost(z, u_max, R)
    w2 = 2.0 * np.asarray(u_max, float) * np.asarray(R, float)
    return _fused.satcost(np.atleast_2d(np.asarray(z, float)), w2)[0]


def quadcost(x, Q, target):
    """(x - target)^T Q (x - target) rowwise, (M, 1)."""
    if isinstance(x, Var):
        return x.tape.quadcost(x, Q, target)
    return _fused.quadcost(np.atleast_2d(np.asarray(x, float)), np.asarray(Q, float),
                           np.asarray(target, float))


def penlog(c, lo, hi, L, k, const_sum):
    """Summed logistic penalty over rows of c, (M, 1)."""
    if isinstance(c, Var):
        return c.tape.penlog(c, lo, hi, L, k, const_sum)
    return _fused.penlog(np.atleast_2d(np.asarray(c, float)), lo, hi, L, k,
                         const_sum)[0]


def penrelu(c, lo, hi, kalpha):
    """Summed ReLU penalty over rows of c, (M, 1)."""
    if isinstance(c, Var):
        return c.tape.penrelu(c, lo, hi, kalpha)
    return _fused.penrelu(np.atleast_2d(np.asarray(c, float)), lo, hi, kalpha)


def wdot(a, w, s):
    """s * sum(a * w, axis=1, keepdims=True), constants w and s."""
    if isinstance(a, Var):
        return a.tape.wdot(a, w, s)
    return _fused.wdot(np.asarray(a, float), np.asarray(w, float), s)
