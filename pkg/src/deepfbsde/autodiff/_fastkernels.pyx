# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython fast kernels: fused LSTM pointwise update, stable activations, Adam.

Signatures mirror _kernels_np exactly; see that module for the reference
semantics. Single threaded on purpose (bit-for-bit determinism).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

NAME = "cython"


cdef inline double _sig(double x) noexcept nogil:
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    cdef double e = exp(x)
    return e / (1.0 + e)


def sigmoid_fwd(object x):
    # numpy's SIMD exp beats a scalar-libm loop by an order of magnitude,
    # so the transcendental-bound forwards stay vectorized even here
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def sigmoid_bwd(object y, object g):
    cdef cnp.ndarray ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray ga = np.ascontiguousarray(g, dtype=np.float64)
    cdef cnp.ndarray out = np.empty_like(ya)
    cdef double[::1] yf = ya.ravel()
    cdef double[::1] gf = ga.ravel()
    cdef double[::1] of = out.ravel()
    cdef Py_ssize_t i, n = yf.shape[0]
    for i in range(n):
        of[i] = gf[i] * yf[i] * (1.0 - yf[i])
    return out


def tanh_bwd(object y, object g):
    cdef cnp.ndarray ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray ga = np.ascontiguousarray(g, dtype=np.float64)
    cdef cnp.ndarray out = np.empty_like(ya)
    cdef double[::1] yf = ya.ravel()
    cdef double[::1] gf = ga.ravel()
    cdef double[::1] of = out.ravel()
    cdef Py_ssize_t i, n = yf.shape[0]
    for i in range(n):
        of[i] = gf[i] * (1.0 - yf[i] * yf[i])
    return out


def softplus_fwd(object x):
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


def softplus_bwd(object x, object g):
    cdef cnp.ndarray xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray ga = np.ascontiguousarray(g, dtype=np.float64)
    cdef cnp.ndarray out = np.empty_like(xa)
    cdef double[::1] xf = xa.ravel()
    cdef double[::1] gf = ga.ravel()
    cdef double[::1] of = out.ravel()
    cdef Py_ssize_t i, n = xf.shape[0]
    for i in range(n):
        of[i] = gf[i] * _sig(xf[i])
    return out


def lstm_point_fwd(object pre, object c_prev):
    # transcendentals via numpy (SIMD), gate combine via one C pass
    cdef cnp.ndarray pa = np.ascontiguousarray(pre, dtype=np.float64)
    cdef cnp.ndarray cpa = np.ascontiguousarray(c_prev, dtype=np.float64)
    cdef Py_ssize_t M = pa.shape[0], H = cpa.shape[1]
    cdef cnp.ndarray out = np.empty((M, 2 * H), dtype=np.float64)
    cdef cnp.ndarray cache = np.empty((M, 5 * H), dtype=np.float64)
    sig = cache[:, : 2 * H]
    o_blk = cache[:, 3 * H : 4 * H]
    with np.errstate(over="ignore"):
        np.negative(pa[:, : 2 * H], out=sig)
        np.exp(sig, out=sig)
        sig += 1.0
        np.reciprocal(sig, out=sig)
        np.negative(pa[:, 3 * H :], out=o_blk)
        np.exp(o_blk, out=o_blk)
        o_blk += 1.0
        np.reciprocal(o_blk, out=o_blk)
    np.tanh(pa[:, 2 * H : 3 * H], out=cache[:, 2 * H : 3 * H])
    cdef double[:, ::1] kv = cache
    cdef double[:, ::1] ov = out
    cdef double[:, ::1] cp = cpa
    cdef Py_ssize_t b, j
    for b in range(M):
        for j in range(H):
            ov[b, H + j] = kv[b, H + j] * cp[b, j] + kv[b, j] * kv[b, 2 * H + j]
    np.tanh(out[:, H:], out=cache[:, 4 * H :])
    for b in range(M):
        for j in range(H):
            ov[b, j] = kv[b, 3 * H + j] * kv[b, 4 * H + j]
    return out, cache


def lstm_point_bwd(object cache, object c_prev, object grad_out):
    cdef double[:, ::1] kv = np.ascontiguousarray(cache, dtype=np.float64)
    cdef double[:, ::1] cp = np.ascontiguousarray(c_prev, dtype=np.float64)
    cdef double[:, ::1] go = np.ascontiguousarray(grad_out, dtype=np.float64)
    cdef Py_ssize_t M = cp.shape[0], H = cp.shape[1]
    cdef cnp.ndarray gpre = np.empty((M, 4 * H), dtype=np.float64)
    cdef cnp.ndarray gcp = np.empty((M, H), dtype=np.float64)
    cdef double[:, ::1] gp = gpre
    cdef double[:, ::1] gc = gcp
    cdef Py_ssize_t b, j
    cdef double i, f, g, o, ct, gh, dc
    for b in range(M):
        for j in range(H):
            i = kv[b, j]
            f = kv[b, H + j]
            g = kv[b, 2 * H + j]
            o = kv[b, 3 * H + j]
            ct = kv[b, 4 * H + j]
            gh = go[b, j]
            dc = go[b, H + j] + gh * o * (1.0 - ct * ct)
            gp[b, j] = dc * g * i * (1.0 - i)
            gp[b, H + j] = dc * cp[b, j] * f * (1.0 - f)
            gp[b, 2 * H + j] = dc * i * (1.0 - g * g)
            gp[b, 3 * H + j] = gh * ct * o * (1.0 - o)
            gc[b, j] = dc * f
    return gpre, gcp


def adam_update(object p, object g, object m, object v, long t,
                double lr, double beta1, double beta2, double eps):
    cdef double[::1] pf = p
    cdef double[::1] gf = np.ascontiguousarray(g, dtype=np.float64).ravel()
    cdef double[::1] mf = m
    cdef double[::1] vf = v
    cdef Py_ssize_t i, n = pf.shape[0]
    cdef double bc1 = 1.0 - beta1 ** t
    cdef double bc2 = 1.0 - beta2 ** t
    cdef double mhat, vhat
    for i in range(n):
        mf[i] = beta1 * mf[i] + (1.0 - beta1) * gf[i]
        vf[i] = beta2 * vf[i] + (1.0 - beta2) * gf[i] * gf[i]
        mhat = mf[i] / bc1
        vhat = vf[i] / bc2
        pf[i] -= lr * mhat / (sqrt(vhat) + eps)
