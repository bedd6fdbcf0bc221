"""Finite-difference verification of every trainable gradient path.

Three suites, each comparing reverse-mode gradients against central finite
differences of the scalar loss: `dense` (tanh MLP), `lstm` (two-layer
recurrent stack unrolled three steps), and `rollout` (a two-step
end-to-end FBSDE rollout through the cart-pole dynamics, saturated control,
logistic penalty, and terminal loss). The reported number per suite is the
worst relative error |g - g_fd| / |g_fd| over all parameter entries whose
absolute disagreement exceeds FLOOR; smaller disagreements are
finite-difference roundoff (cancellation noise scales with the loss
magnitude over the step size), not gradient defects, and count as zero.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, ops
from .costs import CostSpec, terminal_cost
from .dynamics.cartpole import CartPoleModel
from .engine import ValueNet, fbsde_loss, rollout
from .errors import UsageError
from .nn import LstmStack, Mlp
from .penalties import ConstraintSpec, PenaltySpec

__all__ = ["run_gradcheck", "SUITES", "TOLERANCE", "FLOOR"]

SUITES = ("dense", "lstm", "rollout")
TOLERANCE = 1e-5
FLOOR = 1e-8


def _fd_gradient(loss_fn, params, h: float = 2e-5) -> dict:
    # step near the central-difference optimum (3 eps |L|)^(1/3) for losses
    # of magnitude ~10: cancellation noise ~ eps |L| / h stays ~1e-10.
    fd = {}
    for p in params:
        flat = p.value.reshape(-1)
        g = np.zeros(flat.size)
        for i in range(flat.size):
            v0 = flat[i]
            step = h * max(1.0, abs(v0))
            flat[i] = v0 + step
            lp = loss_fn()
            flat[i] = v0 - step
            lm = loss_fn()
            flat[i] = v0
            g[i] = (lp - lm) / (2.0 * step)
        fd[p] = g
    return fd


def _max_rel(analytic: dict, fd: dict, params) -> float:
    worst = 0.0
    for p in params:
        g = analytic.get(p)
        a = (np.zeros(p.value.size) if g is None
             else np.asarray(g, float).reshape(p.value.size))
        diff = np.abs(a - fd[p])
        rel = np.where(diff <= FLOOR, 0.0,
                       diff / np.maximum(np.abs(fd[p]), FLOOR))
        worst = max(worst, float(rel.max()))
    return worst


def _check_dense(seed: int) -> float:
    rng = np.random.default_rng(seed)
    mlp = Mlp(4, [8, 6], 3, rng, name="gc")
    x = rng.normal(0.0, 1.0, (5, 4))
    w = rng.normal(0.0, 1.0, (5, 3))
    params = list(mlp.parameters())

    def loss_fn():
        tape = Tape()
        out = mlp(tape.leaf(x))
        return tape.sum(ops.square(out * w)).value.item()

    tape = Tape()
    out = mlp(tape.leaf(x))
    loss = tape.sum(ops.square(out * w))
    analytic = tape.backward(loss)
    return _max_rel(analytic, _fd_gradient(loss_fn, params), params)


def _check_lstm(seed: int) -> float:
    rng = np.random.default_rng(seed)
    stack = LstmStack(3, [6, 5], 2, rng, name="gc")
    xs = [rng.normal(0.0, 1.0, (4, 3)) for _ in range(3)]
    params = list(stack.parameters())

    def run(tape):
        hs = [tape.leaf(np.zeros((4, h))) for h in (6, 5)]
        cs = [tape.leaf(np.zeros((4, h))) for h in (6, 5)]
        total = None
        for x in xs:
            out, hs, cs = stack.step(tape.leaf(x), hs, cs)
            term = tape.sum(ops.square(out))
            total = term if total is None else total + term
        return total

    def loss_fn():
        return run(Tape()).value.item()

    tape = Tape()
    loss = run(tape)
    analytic = tape.backward(loss)
    return _max_rel(analytic, _fd_gradient(loss_fn, params), params)


def _check_rollout(seed: int) -> float:
    rng = np.random.default_rng(seed)
    model = CartPoleModel()
    costs = CostSpec(Q=np.diag([0.5, 1.0, 0.1, 0.1]),
                     Q_terminal=np.diag([0.5, 1.0, 0.1, 0.1]),
                     R=[0.1], target=[0.0, np.pi, 0.0, 0.0], u_max=[10.0])
    con = ConstraintSpec([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
                         [-1.5, -2.5], [1.5, 2.5])
    pen = PenaltySpec("logistic", con, max_value=5.0, steepness=2.0)
    net = ValueNet(4, (4,), rng,
                   whiten_center=np.array([0.0, np.pi / 2, 0.0, 0.0]),
                   whiten_scale=np.array([1.0, 2.0, 2.0, 4.0]))
    for p in net.parameters():  # nonzero heads so every path carries signal
        if p.value.std() == 0.0:
            p.value[...] = rng.normal(0.0, 0.1, p.value.shape)
    dt = 1.0 / 110.0
    noise = rng.normal(0.0, np.sqrt(dt), (3, 2, 1))
    x0 = np.array([[0.0, 0.3, 0.2, -0.1],
                   [0.4, 2.0, -2.3, 0.5],
                   [-1.4, 3.0, 1.0, 0.0]])
    params = list(net.parameters())

    def q_n(x):
        return terminal_cost(x, costs)

    def loss_fn():
        batch = rollout(net, model, costs, pen, x0, noise, dt)
        return fbsde_loss(batch, q_n).value.item()

    batch = rollout(net, model, costs, pen, x0, noise, dt)
    loss = fbsde_loss(batch, q_n)
    analytic = batch.tape.backward(loss)
    return _max_rel(analytic, _fd_gradient(loss_fn, params), params)


_CHECKS = {"dense": _check_dense, "lstm": _check_lstm,
           "rollout": _check_rollout}


def run_gradcheck(seed: int = 0, subset: str = "all",
                  corrupt: bool = False) -> dict[str, float]:
    """Run the selected suites; returns {suite: max relative error}.

    corrupt=True injects a deliberate error into each result (negative
    control: the caller must see the failure).
    """
    if subset != "all" and subset not in SUITES:
        raise UsageError(f"subset must be all or one of {', '.join(SUITES)}")
    names = SUITES if subset == "all" else (subset,)
    out = {}
    for name in names:
        err = _CHECKS[name](seed)
        if corrupt:
            err += 1.0
        out[name] = err
    return out
