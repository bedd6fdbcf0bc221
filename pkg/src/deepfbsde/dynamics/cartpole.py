"""Cart-pole with input saturation and additive control-channel noise.

State x = [p, th, pdot, thdot]: cart position, pole angle measured from the
downward (hanging) position, and their rates. The swing-up target is
th = pi. Force u acts on the cart. Equations of motion:

    (Mc + mp) pddot + mp l cos(th) thddot - mp l sin(th) thdot^2 = u
    mp l^2 thddot + mp l cos(th) pddot + mp g l sin(th) = 0

Eliminating gives, with D = mp l^2 (Mc + mp sin^2 th) > 0,

    pddot  = [ mp^2 l^3 s thdot^2 + mp^2 g l^2 s c ] / D + (mp l^2 / D) u
    thddot = [ -mp^2 l^2 c s thdot^2 - (Mc+mp) mp g l s ] / D - (mp l c / D) u

so the drift and the control column G(x) = [0, 0, mp l^2/D, -mp l c/D]^T are
exact closed forms of the same reduction.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Var, ops
from .base import SdeModel


class CartPoleModel(SdeModel):
    n = 4
    m = 1

    def __init__(self, cart_mass: float = 1.0, pole_mass: float = 0.01,
                 pole_length: float = 0.5, gravity: float = 9.81,
                 noise_scale: float = 1.0):
        self.cart_mass = float(cart_mass)
        self.pole_mass = float(pole_mass)
        self.pole_length = float(pole_length)
        self.gravity = float(gravity)
        self.noise_scale = float(noise_scale)
        self._trig_key = None
        self._trig_val = None

    def _trig(self, x):
        """(sin th, cos th, D) at x, memoized per tape node: the control law
        and the integrator evaluate them at the same state every step."""
        key = (x.tape.serial, x.idx) if isinstance(x, Var) else None
        if key is not None and key == self._trig_key:
            return self._trig_val
        mp, l = self.pole_mass, self.pole_length
        s = ops.sin(x[:, 1])
        c = ops.cos(x[:, 1])
        den = (mp * l * l) * (self.cart_mass + mp * ops.square(s))
        if key is not None:
            self._trig_key = key
            self._trig_val = (s, c, den)
        return s, c, den

    def drift(self, x):
        mp, l, g = self.pole_mass, self.pole_length, self.gravity
        thd = x[:, 3]
        s, c, den = self._trig(x)
        thd2 = ops.square(thd)
        acc_p = (mp * mp * l * l * l) * s * thd2 + (mp * mp * g * l * l) * s * c
        acc_t = -(mp * mp * l * l) * c * s * thd2 - ((self.cart_mass + mp) * mp * g * l) * s
        return ops.stack_cols([x[:, 2], thd, acc_p / den, acc_t / den])

    def gu(self, x, v):
        mp, l = self.pole_mass, self.pole_length
        s, c, den = self._trig(x)
        v0 = v[:, 0]
        return ops.stack_cols([0.0, 0.0, (mp * l * l) * v0 / den,
                               -(mp * l) * c * v0 / den])

    def gtv(self, x, w):
        mp, l = self.pole_mass, self.pole_length
        s, c, den = self._trig(x)
        out = ((mp * l * l) * w[:, 2] - (mp * l) * c * w[:, 3]) / den
        return ops.reshape(out, (-1, 1))

    def em_increment(self, x, u, dw, dt, sigma):
        """(F + G u) dt + sigma G dw with all four entries assembled from one
        trig/denominator evaluation and one shared G application."""
        mp, l, g, mc = (self.pole_mass, self.pole_length, self.gravity,
                        self.cart_mass)
        s, c, den = self._trig(x)
        pd = x[:, 2]
        thd = x[:, 3]
        st2 = s * ops.square(thd)
        w = u[:, 0] * dt + sigma * np.asarray(dw, float)[:, 0]
        acc_p = ((mp * mp * l * l * l * dt) * st2
                 + (mp * mp * g * l * l * dt) * (s * c)
                 + (mp * l * l) * w)
        acc_t = (-(mp * mp * l * l * dt)) * (c * st2) \
            - ((mc + mp) * mp * g * l * dt) * s - (mp * l) * (c * w)
        return ops.stack_cols([pd * dt, thd * dt, acc_p / den, acc_t / den])


def cartpole_accel(state, u, cart_mass: float = 1.0, pole_mass: float = 0.01,
                   pole_length: float = 0.5, gravity: float = 9.81):
    """(pddot, thddot) for one state, by solving the 2x2 mass-matrix system.

    Independent of the closed-form reduction in CartPoleModel (used to
    cross-check it). The mass matrix here is always invertible: its
    determinant is mp l^2 (Mc + mp sin^2 th) >= mp l^2 Mc > 0.
    """
    p, th, pd, thd = np.asarray(state, float)
    u = float(np.asarray(u).reshape(()))
    mc, mp, l, g = cart_mass, pole_mass, pole_length, gravity
    s, c = np.sin(th), np.cos(th)
    A = np.array([[mc + mp, mp * l * c],
                  [mp * l * c, mp * l * l]])
    rhs = np.array([u + mp * l * s * thd * thd,
                    -mp * g * l * s])
    acc = np.linalg.solve(A, rhs)
    return float(acc[0]), float(acc[1])
