"""Dynamics models: closed forms, energy conservation, adjoint identities."""

from __future__ import annotations

import numpy as np
import pytest
from conftest import fd_scalar

from deepfbsde.autodiff import Tape, ops
from deepfbsde.dynamics.base import em_step, rk4_step, whiten
from deepfbsde.dynamics.biped import BipedModel, BipedParams, biped_accel
from deepfbsde.dynamics.cartpole import CartPoleModel, cartpole_accel
from deepfbsde.dynamics.lintoy import DoubleIntegratorModel
from deepfbsde.errors import IntegrationBlowup


def drift_np(model, x):
    return ops.value(model.drift(np.atleast_2d(x)))


# ---------------- cart-pole ----------------

def test_cartpole_hanging_accelerations():
    """At rest hanging straight down, a unit force gives pddot = u / Mc and
    thddot = -u cos(th) / (l Mc) = -2 u for the default geometry."""
    m = CartPoleModel()
    x = np.zeros((1, 4))
    u = np.array([[1.0]])
    acc = ops.value(m.drift(x) + m.gu(x, u))[0]
    np.testing.assert_allclose(acc, [0.0, 0.0, 1.0, -2.0], atol=1e-14)


def test_cartpole_matches_independent_mass_matrix_solve(rng):
    m = CartPoleModel(cart_mass=1.3, pole_mass=0.2, pole_length=0.7)
    for _ in range(20):
        x = rng.normal(size=4) * np.array([1.0, np.pi, 2.0, 3.0])
        u = rng.normal() * 5.0
        pdd, thdd = cartpole_accel(x, u, cart_mass=1.3, pole_mass=0.2,
                                   pole_length=0.7)
        closed = ops.value(m.drift(x[None]) + m.gu(x[None], np.array([[u]])))[0]
        np.testing.assert_allclose(closed[2:], [pdd, thdd], rtol=1e-11)
        np.testing.assert_allclose(closed[:2], x[2:], rtol=0, atol=0)


def test_cartpole_unforced_energy_conserved(rng):
    """RK4 on the drift alone preserves the mechanical energy

        E = (Mc+mp)/2 pd^2 + mp l c pd thd + mp l^2/2 thd^2 - mp g l cos th
    """
    m = CartPoleModel()
    mp, l, g, mc = m.pole_mass, m.pole_length, m.gravity, m.cart_mass

    def energy(x):
        p, th, pd, thd = x
        return (0.5 * (mc + mp) * pd**2 + mp * l * np.cos(th) * pd * thd
                + 0.5 * mp * l * l * thd**2 - mp * g * l * np.cos(th))

    x = np.array([0.3, 2.0, -0.4, 1.1])
    e0 = energy(x)
    f = lambda s: drift_np(m, s[None])[0]
    for _ in range(400):
        x = rk4_step(f, x, 1e-3)
    assert abs(energy(x) - e0) < 1e-9 * max(1.0, abs(e0))


def test_cartpole_em_increment_matches_composition(rng):
    m = CartPoleModel()
    x = rng.normal(size=(6, 4))
    u = rng.normal(size=(6, 1)) * 3.0
    dw = rng.normal(size=(6, 1)) * 0.1
    dt, sigma = 0.01, 0.8
    fused = ops.value(m.em_increment(x, u, dw, dt, sigma))
    composed = ops.value(m.drift(x)) * dt + ops.value(
        m.gu(x, u * dt + sigma * dw))
    np.testing.assert_allclose(fused, composed, rtol=1e-12, atol=1e-14)

    tape = Tape()
    xv = tape.leaf(x, diff=True)
    uv = tape.leaf(u, diff=True)
    fused_var = m.em_increment(xv, uv, dw, dt, sigma)
    np.testing.assert_allclose(fused_var.value, fused, rtol=1e-14)


def test_cartpole_gtv_is_adjoint_of_gu(rng):
    m = CartPoleModel()
    x = rng.normal(size=(5, 4))
    v = rng.normal(size=(5, 1))
    w = rng.normal(size=(5, 4))
    lhs = np.sum(ops.value(m.gu(x, v)) * w, axis=1)
    rhs = np.sum(ops.value(m.gtv(x, w)) * v, axis=1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


def test_cartpole_drift_gradient_matches_fd(rng):
    m = CartPoleModel()
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(3, 4))

    def build(x_arr):
        tape = Tape()
        xv = tape.leaf(x_arr, diff=True)
        out = tape.sum(m.drift(xv) * w)
        return tape, xv, out

    tape, xv, out = build(x)
    (g,) = tape.grad(out, [xv])
    fd = fd_scalar(lambda a: build(a)[2].value.item(), x.copy())
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_cartpole_noise_enters_through_control_channel():
    m = CartPoleModel()
    x = np.array([0.2, 1.0, -0.3, 0.5])
    G = m.control_matrix(x)
    assert G.shape == (4, 1)
    np.testing.assert_array_equal(G[:2, 0], [0.0, 0.0])
    np.testing.assert_allclose(m.diffusion(x), m.noise_scale * G)
    assert m.noise_in_control_range(x)


# ---------------- double integrator ----------------

def test_double_integrator_is_linear(rng):
    m = DoubleIntegratorModel()
    x = rng.normal(size=(4, 2))
    u = rng.normal(size=(4, 1))
    np.testing.assert_allclose(ops.value(m.drift(x)), x @ m.A.T, atol=1e-15)
    np.testing.assert_allclose(ops.value(m.gu(x, u)), u @ m.B.T, atol=1e-15)
    w = rng.normal(size=(4, 2))
    lhs = np.sum(ops.value(m.gu(x, u)) * w, axis=1)
    rhs = np.sum(ops.value(m.gtv(x, w)) * u, axis=1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-13)


# ---------------- five-link biped ----------------

def random_biped_states(rng, m=6):
    q = rng.uniform(-0.5, 0.5, size=(m, 5))
    qd = rng.uniform(-2.0, 2.0, size=(m, 5))
    return np.concatenate([q, qd], axis=1)


def test_biped_mass_matrix_symmetric_positive_definite(rng):
    model = BipedModel()
    q = rng.uniform(-np.pi, np.pi, size=(8, 5))
    M = ops.value(model._mass_matrix(q))
    np.testing.assert_allclose(M, np.swapaxes(M, 1, 2), atol=1e-12)
    eig = np.linalg.eigvalsh(M)
    assert eig.min() > 0.0


def test_biped_upright_rest_is_equilibrium():
    model = BipedModel()
    x = np.zeros((1, 10))
    np.testing.assert_allclose(drift_np(model, x), np.zeros((1, 10)),
                               atol=1e-13)


def test_biped_accel_matches_drift_plus_control(rng):
    model = BipedModel()
    x = random_biped_states(rng, 1)
    u = rng.normal(size=4) * 10.0
    qdd = biped_accel(x[0, :5], x[0, 5:], np.concatenate([[0.0], u]))
    closed = ops.value(model.drift(x) + model.gu(x, u[None]))[0]
    np.testing.assert_allclose(closed[5:], qdd, rtol=1e-10)
    np.testing.assert_allclose(closed[:5], x[0, 5:], atol=0)


def test_biped_passive_energy_conserved(rng):
    """Unforced pinned walker conserves E = qd^T M qd / 2 + g w^T cos q;
    checks the mass matrix, Coriolis and gravity terms jointly."""
    model = BipedModel()
    p = model.params

    def energy(x):
        q, qd = x[:5], x[5:]
        M = ops.value(model._mass_matrix(q[None]))[0]
        return 0.5 * qd @ M @ qd + p.gravity * (p.w @ np.cos(q))

    x = np.concatenate([rng.uniform(-0.3, 0.3, 5), rng.uniform(-1.0, 1.0, 5)])
    e0 = energy(x)
    f = lambda s: drift_np(model, s[None])[0]
    for _ in range(200):
        x = rk4_step(f, x, 5e-4)
    assert abs(energy(x) - e0) < 1e-8 * max(1.0, abs(e0))


def test_biped_em_increment_matches_composition(rng):
    model = BipedModel()
    x = random_biped_states(rng)
    u = rng.normal(size=(6, 4)) * 20.0
    dw = rng.normal(size=(6, 4)) * 0.05
    dt, sigma = 0.01, 0.5
    fused = ops.value(model.em_increment(x, u, dw, dt, sigma))
    composed = ops.value(model.drift(x)) * dt + ops.value(
        model.gu(x, u * dt + sigma * dw))
    np.testing.assert_allclose(fused, composed, rtol=1e-10, atol=1e-13)


def test_biped_gtv_is_adjoint_of_gu(rng):
    model = BipedModel()
    x = random_biped_states(rng)
    v = rng.normal(size=(6, 4))
    w = rng.normal(size=(6, 10))
    lhs = np.sum(ops.value(model.gu(x, v)) * w, axis=1)
    rhs = np.sum(ops.value(model.gtv(x, w)) * v, axis=1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10)


def test_biped_drift_gradient_matches_fd(rng):
    model = BipedModel()
    x = random_biped_states(rng, 2)
    w = rng.normal(size=(2, 10))

    def build(x_arr):
        tape = Tape()
        xv = tape.leaf(x_arr, diff=True)
        out = tape.sum(model.drift(xv) * w)
        return tape, xv, out

    tape, xv, out = build(x)
    (g,) = tape.grad(out, [xv])
    fd = fd_scalar(lambda a: build(a)[2].value.item(), x.copy())
    np.testing.assert_allclose(g, fd, rtol=2e-6, atol=1e-8)


def test_biped_geometry_chain(rng):
    model = BipedModel()
    p = model.params
    q = rng.uniform(-0.6, 0.6, size=5)
    pts = model.link_points(q)
    np.testing.assert_array_equal(pts[0], [0.0, 0.0])       # stance foot pinned
    np.testing.assert_allclose(np.linalg.norm(pts[1] - pts[0]), p.lengths[0])
    np.testing.assert_allclose(np.linalg.norm(pts[2] - pts[1]), p.lengths[1])
    np.testing.assert_allclose(np.linalg.norm(pts[3] - pts[2]), p.lengths[2])
    np.testing.assert_allclose(np.linalg.norm(pts[4] - pts[2]), p.lengths[3])
    np.testing.assert_allclose(np.linalg.norm(pts[5] - pts[4]), p.lengths[4])
    np.testing.assert_allclose(model.swing_foot_position(q), pts[5], atol=1e-14)
    # both feet meet at the origin when every link is vertical
    np.testing.assert_allclose(model.swing_foot_position(np.zeros(5)),
                               [0.0, 0.0], atol=1e-15)


def test_biped_stance_tibia_is_passive(rng):
    """The control matrix's first generalized coordinate row block stays empty:
    torques cannot act on q1 directly (G = M^{-1} [0 | I] lift)."""
    model = BipedModel()
    x = random_biped_states(rng, 1)
    G = model.control_matrix(x[0])
    assert G.shape == (10, 4)
    np.testing.assert_array_equal(G[:5], np.zeros((5, 4)))   # kinematic rows
    M5 = ops.value(model._mass_matrix(x[:1, :5]))[0]
    lifted = M5 @ G[5:]
    np.testing.assert_allclose(lifted, np.vstack([np.zeros(4), np.eye(4)]),
                               atol=1e-10)
    assert model.noise_in_control_range(x[0])


# ---------------- integrators and helpers ----------------

def test_em_step_matches_formula_and_raises_on_blowup(rng):
    m = DoubleIntegratorModel()
    x = rng.normal(size=(3, 2))
    u = rng.normal(size=(3, 1))
    dw = rng.normal(size=(3, 1))
    out = em_step(m, x, u, dw, 0.05)
    expect = x + ops.value(m.drift(x)) * 0.05 + ops.value(
        m.gu(x, u * 0.05 + m.noise_scale * dw))
    np.testing.assert_allclose(out, expect, rtol=1e-13)

    bad = np.array([[1e308, 1e308]])
    with np.errstate(over="ignore"), pytest.raises(IntegrationBlowup) as exc:
        em_step(m, bad, np.array([[1e308]]), np.array([[1.0]]), 1e6, step=17)
    assert exc.value.step == 17


def test_rk4_is_fifth_order_per_step():
    f = lambda x: x                      # x' = x, exact flow e^dt
    errs = []
    for dt in (0.1, 0.05):
        out = rk4_step(f, np.array([1.0]), dt)
        errs.append(abs(out[0] - np.exp(dt)))
    assert errs[0] / errs[1] > 25.0      # halving dt cuts the error ~32x


def test_whiten_elementwise(rng):
    x = rng.normal(size=(3, 2))
    center = np.array([1.0, -2.0])
    scale = np.array([2.0, 4.0])
    np.testing.assert_allclose(whiten(x, center, scale), (x - center) / scale)
    tape = Tape()
    xv = tape.leaf(x)
    np.testing.assert_allclose(whiten(xv, center, scale).value,
                               (x - center) / scale)
