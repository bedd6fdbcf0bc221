"""Planar five-link biped (compass walker with torso and knees).

Links, in state order: stance tibia, stance femur, torso, swing femur, swing
tibia. Coordinates are ABSOLUTE link angles measured from the upward
vertical, stacked with their rates: x = [q1..q5, qd1..qd5]. The stance foot
is the pinned origin between heel strikes. A link at angle q points along
u(q) = [-sin q, cos q], so positive angles lean the link toward -x and the
walker progresses toward +x when the swing leg carries negative angles.

With the chain geometry folded into a constant coefficient matrix A (link-i
center of mass at r_i = sum_j A[i,j] u(q_j)), every configuration-dependent
quantity reduces to P = A^T diag(m) A and w = m^T A:

    M(q)[j,k]   = P[j,k] cos(q_j - q_k) + delta_jk I_j      (mass matrix)
    (C qd)[j]   = sum_k P[j,k] sin(q_j - q_k) qd_k^2        (Coriolis)
    gravity[j]  = -g w[j] sin(q_j)                          (d/dq of g w^T cos q)

M(q) is symmetric positive definite for all q (congruent to diag(m) plus
positive rotor inertias), so the forward dynamics is one batched 5x5 solve.
Torques act on the four actuated coordinates q2..q5; the stance tibia is
passive, u_full = [0, u1..u4].

Heel strike is an instantaneous plastic impact. On a 7-DOF floating-base
copy of the robot (base point = old stance foot) the impact conserves
generalized momentum against the impulse at the NEW contact point:

    [ M7  -J^T ] [Qd+   ]   [ M7 Qd- ]
    [ J    0   ] [Lambda] = [ 0      ]

where J is the swing-foot Jacobian. Afterwards the legs swap labels via the
antidiagonal permutation (an involution): q+ = J5 q-, qd+ = J5 qd_post.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Var, ops
from ..errors import NumericalError
from .base import SdeModel


class BipedParams:
    """Link masses, inertias, lengths, COM offsets (from each link's lower
    joint) and gravity; defaults are the standard five-link walking set."""

    def __init__(self,
                 masses=(3.2, 6.8, 20.0, 6.8, 3.2),
                 inertias=(0.93, 1.08, 2.22, 1.08, 0.93),
                 lengths=(0.4, 0.4, 0.625, 0.4, 0.4),
                 com_offsets=(0.128, 0.163, 0.2, 0.163, 0.128),
                 gravity: float = 9.81):
        self.masses = np.asarray(masses, float)
        self.inertias = np.asarray(inertias, float)
        self.lengths = np.asarray(lengths, float)
        self.com_offsets = np.asarray(com_offsets, float)
        self.gravity = float(gravity)
        if not (self.masses.shape == self.inertias.shape == self.lengths.shape
                == self.com_offsets.shape == (5,)):
            raise ValueError("biped parameter vectors must have length 5")

        m, l, c = self.masses, self.lengths, self.com_offsets
        A = np.zeros((5, 5))
        A[0, 0] = c[0]
        A[1, :2] = (l[0], c[1])
        A[2, :3] = (l[0], l[1], c[2])
        A[3, :2] = (l[0], l[1])
        A[3, 3] = -(l[3] - c[3])
        A[4, :2] = (l[0], l[1])
        A[4, 3] = -l[3]
        A[4, 4] = -(l[4] - c[4])
        self.A = A
        self.P = A.T @ np.diag(m) @ A
        self.w = m @ A
        self.total_mass = float(m.sum())
        # swing-foot position coefficients: pf = sum_j d[j] u(q_j)
        self.d = np.array([l[0], l[1], 0.0, -l[3], -l[4]])


# antidiagonal leg-relabeling permutation; J5 @ J5 = I
J5 = np.eye(5)[::-1].copy()


class BipedModel(SdeModel):
    n = 10
    m = 4

    def __init__(self, params: BipedParams | None = None, noise_scale: float = 0.5):
        self.params = params or BipedParams()
        self.noise_scale = float(noise_scale)

    # -- shared pieces -------------------------------------------------

    def _mass_matrix(self, q):
        """M(q) as (M, 5, 5) for batched q (M, 5)."""
        p = self.params
        M = q.shape[0] if isinstance(q, Var) else np.asarray(q).shape[0]
        qc = ops.reshape(q, (M, 5, 1))
        qr = ops.reshape(q, (M, 1, 5))
        return ops.cos(qc - qr) * p.P + np.diag(p.inertias)

    def _sinP(self, q):
        p = self.params
        M = q.shape[0] if isinstance(q, Var) else np.asarray(q).shape[0]
        qc = ops.reshape(q, (M, 5, 1))
        qr = ops.reshape(q, (M, 1, 5))
        return ops.sin(qc - qr) * p.P

    def _bias(self, q, qd):
        """g w sin q - C(q, qd) qd: everything on the right side but torques."""
        p = self.params
        cor = ops.bmv(self._sinP(q), ops.square(qd))
        return (p.gravity * p.w) * ops.sin(q) - cor

    # -- SdeModel interface --------------------------------------------

    def drift(self, x):
        q = x[:, :5]
        qd = x[:, 5:]
        qdd = ops.solve(self._mass_matrix(q), self._bias(q, qd))
        return ops.concat([qd, qdd], axis=1)

    def _lift(self, x, v):
        """[0, v] padding of a 4-vector of joint torques into R^5."""
        M = v.shape[0] if isinstance(v, Var) else np.asarray(v).shape[0]
        if isinstance(v, Var):
            zero = np.zeros((M, 1))
            return ops.concat([zero, v], axis=1)
        return np.concatenate([np.zeros((M, 1)), v], axis=1)

    def gu(self, x, v):
        q = x[:, :5]
        M = x.shape[0] if isinstance(x, Var) else np.asarray(x).shape[0]
        qdd = ops.solve(self._mass_matrix(q), self._lift(x, v))
        zeros = np.zeros((M, 5))
        return ops.concat([zeros, qdd], axis=1)

    def gtv(self, x, w):
        q = x[:, :5]
        sol = ops.solve(self._mass_matrix(q), w[:, 5:])
        return sol[:, 1:]

    def em_increment(self, x, u, dw, dt, sigma):
        # single mass-matrix solve for drift, control and noise together
        q = x[:, :5]
        qd = x[:, 5:]
        rhs = self._lift(x, u * dt + sigma * dw) + self._bias(q, qd) * dt
        qdd_part = ops.solve(self._mass_matrix(q), rhs)
        return ops.concat([qd * dt, qdd_part], axis=1)

    # -- heel strike ----------------------------------------------------

    def heel_strike(self, x):
        """Impact plus leg relabeling; accepts (10,), (M, 10) or a Var."""
        single = not isinstance(x, Var) and np.asarray(x).ndim == 1
        if single:
            x = np.asarray(x, float).reshape(1, 10)
        p = self.params
        M = x.shape[0] if isinstance(x, Var) else x.shape[0]
        q = x[:, :5]
        qd = x[:, 5:]
        cq = ops.cos(q)
        sq = ops.sin(q)
        # B[:, j] = w_j u'(q_j), u'(q) = [-cos q, -sin q]
        b0 = (-p.w) * cq
        b1 = (-p.w) * sq
        # swing-foot Jacobian q-columns: d_j u'(q_j)
        j0 = (-p.d) * cq
        j1 = (-p.d) * sq
        M5 = self._mass_matrix(q)
        entries = [
            (0, 0, 1, 1, p.total_mass), (1, 1, 1, 1, p.total_mass),
            (0, 2, 1, 5, ops.reshape(b0, (M, 1, 5))),
            (1, 2, 1, 5, ops.reshape(b1, (M, 1, 5))),
            (2, 0, 5, 1, ops.reshape(b0, (M, 5, 1))),
            (2, 1, 5, 1, ops.reshape(b1, (M, 5, 1))),
            (2, 2, 5, 5, M5),
            # -J^T in the last two columns
            (0, 7, 1, 1, -1.0), (1, 8, 1, 1, -1.0),
            (2, 7, 5, 1, ops.reshape(-1.0 * j0, (M, 5, 1))),
            (2, 8, 5, 1, ops.reshape(-1.0 * j1, (M, 5, 1))),
            # J in the last two rows
            (7, 0, 1, 1, 1.0), (8, 1, 1, 1, 1.0),
            (7, 2, 1, 5, ops.reshape(j0, (M, 1, 5))),
            (8, 2, 1, 5, ops.reshape(j1, (M, 1, 5))),
        ]
        K = ops.paste(M, 9, 9, entries)
        top0 = ops.rsum(b0 * qd, axis=1, keepdims=True)
        top1 = ops.rsum(b1 * qd, axis=1, keepdims=True)
        rhs = ops.concat([top0, top1, ops.bmv(M5, qd), np.zeros((M, 2))], axis=1)
        sol = ops.solve(K, rhs)
        qd_post = sol[:, 2:7]
        x_new = ops.concat([ops.matmul(q, J5), ops.matmul(qd_post, J5)], axis=1)
        if single:
            return ops.value(x_new).reshape(10)
        return x_new

    # -- plain-numpy helpers ---------------------------------------------

    def swing_foot_position(self, q1: np.ndarray) -> np.ndarray:
        """Swing foot (x, y) relative to the stance foot, one configuration."""
        q = np.asarray(q1, float).reshape(5)
        u = np.stack([-np.sin(q), np.cos(q)], axis=0)  # (2, 5)
        return u @ self.params.d

    def link_points(self, q1: np.ndarray) -> np.ndarray:
        """Joint chain [stance foot, knee, hip, torso top, swing knee, swing
        foot] as (6, 2), for plotting and geometric tests."""
        p = self.params
        q = np.asarray(q1, float).reshape(5)
        u = np.stack([-np.sin(q), np.cos(q)], axis=1)  # (5, 2)
        pts = [np.zeros(2)]
        knee = p.lengths[0] * u[0]
        hip = knee + p.lengths[1] * u[1]
        pts += [knee, hip, hip + p.lengths[2] * u[2]]
        swing_knee = hip - p.lengths[3] * u[3]
        pts += [swing_knee, swing_knee - p.lengths[4] * u[4]]
        return np.stack(pts, axis=0)


def biped_accel(q, qd, u_full, params: BipedParams | None = None) -> np.ndarray:
    """qddot for a single configuration; u_full is the 5-vector of
    generalized forces (first entry 0 when only the joints are actuated)."""
    p = params or BipedParams()
    model = BipedModel(p)
    q = np.asarray(q, float).reshape(1, 5)
    qd = np.asarray(qd, float).reshape(1, 5)
    u = np.asarray(u_full, float).reshape(1, 5)
    M5 = model._mass_matrix(q)[0]
    cond = np.linalg.cond(M5)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalError(f"mass matrix condition number {cond:.3e}")
    rhs = ops.value(model._bias(q, qd))[0] + u[0]
    return np.linalg.solve(M5, rhs)
