"""Forward formulas shared by the fused tape ops and the plain-ndarray path.

Routing both paths through one implementation keeps them bit-identical, so
costs/penalties evaluated on a tape match the same quantities recomputed
from logged trajectories exactly.
"""

from __future__ import annotations

import numpy as np

LN2 = float(np.log(2.0))


def sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def features(x, center, inv_scale, tfrac):
    """[whitened state | time fraction] -> (M, n+1)."""
    M, n = x.shape
    out = np.empty((M, n + 1))
    np.subtract(x, center, out=out[:, :n])
    out[:, :n] *= inv_scale
    out[:, n] = tfrac
    return out


# largest double below 1.0; scale * _TANH_INSIDE < scale for every positive
# scale (the product lands within one spacing below scale and rounds down)
_TANH_INSIDE = 1.0 - 2.0**-53


def sat(z, scale):
    """scale * tanh(z/2): saturated control from the preactivation.

    float64 tanh rounds to exactly +-1.0 once |z| exceeds ~38, which would
    park the control on the saturation boundary; clamping one ulp inside
    keeps |u| strictly below the limit for any input, as the math promises.
    """
    t = np.tanh(0.5 * z)
    np.clip(t, -_TANH_INSIDE, _TANH_INSIDE, out=t)
    return scale * t


def satcost(z, w2):
    """Row-summed saturated-control running cost from the preactivation.

    With s = sigmoid(z) and w2_i = 2 u_max_i c_i:
      r = sum_i w2_i [ln 2 - s softplus(-z) - (1-s) softplus(z)]_i
    Returns ((M, 1) value, s) -- s is the backward cache.
    """
    s = sigmoid(z)
    spp = np.logaddexp(0.0, z)
    spn = np.logaddexp(0.0, -z)
    inner = LN2 - s * spn - (1.0 - s) * spp
    return np.asarray(inner @ w2).reshape(-1, 1), s


def quadcost(x, Q, target):
    """(x-target)^T Q (x-target) rowwise -> (M, 1)."""
    d = x - target
    return np.einsum("ij,jk,ik->i", d, Q, d)[:, None]


def penlog(c, lo, hi, L, k, const_sum):
    """Summed logistic penalty over constraint rows, uniform form.

    Per row: L [s(k(c-hi)) - s(k(c-lo))] + const_r; +-inf bounds saturate
    the corresponding sigmoid to a constant (gradient exactly zero), and
    const_sum collects the per-row constants. Returns ((M,1), s_hi, s_lo).
    """
    with np.errstate(invalid="ignore"):
        s_hi = sigmoid(k * (c - hi))
        s_lo = sigmoid(k * (c - lo))
    val = L * np.sum(s_hi - s_lo, axis=1)[:, None] + const_sum
    return val, s_hi, s_lo


def penrelu(c, lo, hi, kalpha):
    """kalpha * sum(relu(lo - c) + relu(c - hi)) -> (M, 1)."""
    v = np.maximum(lo - c, 0.0) + np.maximum(c - hi, 0.0)
    return kalpha * np.sum(v, axis=1)[:, None]


def wdot(a, w, s):
    """s * sum(a * w, axis=1, keepdims) -> (M, 1)."""
    return s * np.sum(a * w, axis=1)[:, None]
