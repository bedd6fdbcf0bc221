"""Pure numpy reference implementations of the fast kernels.

Same call signatures as the Cython module `_fastkernels`; this is the fallback
backend and the ground truth for the backend-equivalence tests. Gate order in
all LSTM buffers is (input, forget, cell, output).
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def sigmoid_fwd(x):
    # 1/(1+exp(-x)) is fine for x -> -inf (exp overflows to inf, result -> 0);
    # suppress the spurious overflow warning.
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def sigmoid_bwd(y, g):
    return g * y * (1.0 - y)


def tanh_bwd(y, g):
    return g * (1.0 - y * y)


def softplus_fwd(x):
    return np.logaddexp(0.0, x)


def softplus_bwd(x, g):
    return g * sigmoid_fwd(x)


def lstm_point_fwd(pre, c_prev):
    """Pointwise LSTM cell update.

    pre     (M, 4H) gate preactivations, blocks [i | f | g | o]
    c_prev  (M, H)  previous cell state
    returns (out, cache): out (M, 2H) = [h' | c'], cache (M, 5H) = [i f g o tanh(c')]
    """
    M, H = c_prev.shape
    cache = np.empty((M, 5 * H))
    out = np.empty((M, 2 * H))
    sig = cache[:, : 2 * H]  # i | f
    o = cache[:, 3 * H : 4 * H]
    with np.errstate(over="ignore"):
        np.negative(pre[:, : 2 * H], out=sig)
        np.exp(sig, out=sig)
        sig += 1.0
        np.reciprocal(sig, out=sig)
        np.negative(pre[:, 3 * H :], out=o)
        np.exp(o, out=o)
        o += 1.0
        np.reciprocal(o, out=o)
    g = np.tanh(pre[:, 2 * H : 3 * H])
    cache[:, 2 * H : 3 * H] = g
    c = out[:, H:]
    np.multiply(cache[:, H : 2 * H], c_prev, out=c)
    c += cache[:, :H] * g
    ct = cache[:, 4 * H :]
    np.tanh(c, out=ct)
    np.multiply(o, ct, out=out[:, :H])
    return out, cache


def lstm_point_bwd(cache, c_prev, grad_out):
    """Backward of lstm_point_fwd.

    grad_out (M, 2H) adjoint of [h' | c']
    returns (grad_pre (M, 4H), grad_c_prev (M, H))
    """
    H = c_prev.shape[1]
    i = cache[:, :H]
    f = cache[:, H : 2 * H]
    g = cache[:, 2 * H : 3 * H]
    o = cache[:, 3 * H : 4 * H]
    ct = cache[:, 4 * H :]
    gh = grad_out[:, :H]
    dc = grad_out[:, H:] + gh * o * (1.0 - ct * ct)
    gi = dc * g * i * (1.0 - i)
    gf = dc * c_prev * f * (1.0 - f)
    gg = dc * i * (1.0 - g * g)
    go = gh * ct * o * (1.0 - o)
    grad_pre = np.concatenate([gi, gf, gg, go], axis=1)
    return grad_pre, dc * f


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected Adam step, in place on p, m, v (flat float64 views)."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
