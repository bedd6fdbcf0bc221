"""Value-gradient network, saturated control law, FBSDE rollout, losses.

One training iteration records a single tape: the batched state follows the
Euler-Maruyama forward SDE while the value estimate y is integrated along it,

    y_{k+1} = y_k - (qbar(x_k) + r(u_k)) dt + V_x^T Sigma(x_k) dw_k,

with V_x = vx_net(x_k, t_k) and the control in closed form from V_x:

    u_k = u_max * sig(-R^{-1} G(x_k)^T V_x),     sig(v) = 2/(1+e^{-v}) - 1.

sig(v) equals tanh(v/2), so with z = -R^{-1} G^T V_x the control is
u = u_max tanh(z/2) and the control cost has the saturation-safe z-form from
`costs.control_cost_z`. The noise correction reuses G^T V_x:
V_x^T Sigma dw = sigma (G^T V_x) . dw, costing no extra mass-matrix solve.

The terminal mismatch between y_N and the terminal cost is the training
signal (fbsde_loss); hybrid mode adds a regression of the initial-value
network onto measured cost-to-go targets along the whole trajectory
(value_target / hybrid_loss) and evaluates the terminal cost after the
reset map.

Divergence: batch rows whose state or value goes non-finite mid-rollout are
zeroed and dropped from every loss term (their gradients are exactly cut by
the guard op); `on_divergence="raise"` turns the first death into an
IntegrationBlowup carrying the step index instead.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter, Tape, Var, ops
from .costs import CostSpec, control_cost_z, quad_cost
from .dynamics.base import SdeModel, whiten
from .errors import IntegrationBlowup, UsageError
from .nn import LstmStack, Mlp
from .penalties import penalty


class ValueNet:
    """vx_net (value gradient), v0_head (initial value), h0_head (initial
    hidden/cell states). Heads are scalars/fixed vectors in fixed-x0 mode and
    small dense networks of x0 in hybrid mode."""

    def __init__(self, n: int, lstm_sizes, rng: np.random.Generator,
                 whiten_center, whiten_scale,
                 v0_mode: str = "scalar", h0_mode: str = "fixed",
                 v0_hidden=(8, 16, 8), h0_hidden=(8,)):
        if v0_mode not in ("scalar", "mlp") or h0_mode not in ("fixed", "mlp"):
            raise UsageError("v0_mode must be scalar|mlp, h0_mode fixed|mlp")
        self.n = int(n)
        self.lstm_sizes = [int(s) for s in lstm_sizes]
        self.v0_mode = v0_mode
        self.h0_mode = h0_mode
        self.v0_hidden = [int(s) for s in v0_hidden]
        self.h0_hidden = [int(s) for s in h0_hidden]
        self.whiten_center = np.asarray(whiten_center, float).reshape(n)
        self.whiten_scale = np.asarray(whiten_scale, float).reshape(n)
        if np.any(self.whiten_scale <= 0):
            raise UsageError("whitening scales must be positive")
        self._inv_scale = 1.0 / self.whiten_scale

        self.vx_net = LstmStack(n + 1, self.lstm_sizes, n, rng, name="vx")
        if v0_mode == "scalar":
            self.v0 = Parameter(np.zeros((1, 1)), "v0.value")
            self.v0_net = None
        else:
            self.v0 = None
            self.v0_net = Mlp(n + 1, self.v0_hidden, 1, rng, name="v0")
        if h0_mode == "fixed":
            self.h0 = [(Parameter(np.zeros((1, h)), f"h0.l{i}.h"),
                        Parameter(np.zeros((1, h)), f"h0.l{i}.c"))
                       for i, h in enumerate(self.lstm_sizes)]
            self.h0_nets = None
        else:
            self.h0 = None
            self.h0_nets = [Mlp(n, self.h0_hidden, 2 * h, rng, name=f"h0.l{i}")
                            for i, h in enumerate(self.lstm_sizes)]

    def features(self, x, tfrac: float):
        return ops.features(x, self.whiten_center, self._inv_scale, float(tfrac))

    def initial(self, x0: Var):
        """(y0 (M,1), hs, cs) for a batch starting at x0."""
        M = x0.shape[0]
        tape = x0.tape
        y0 = self.v0_eval(x0, 0.0)
        hs, cs = [], []
        if self.h0_mode == "fixed":
            zero_col = np.zeros((M, 1))
            for ph, pc in self.h0:
                hs.append(tape.bind(ph) + zero_col)
                cs.append(tape.bind(pc) + zero_col)
        else:
            xw = whiten(x0, self.whiten_center, self.whiten_scale)
            for net, h in zip(self.h0_nets, self.lstm_sizes):
                hc = net(xw)
                hs.append(hc[:, :h])
                cs.append(hc[:, h:])
        return y0, hs, cs

    def v0_eval(self, x: Var, tfrac: float):
        """Initial-value head V0(x, t), (M, 1)."""
        if self.v0_mode == "scalar":
            M = x.shape[0]
            return x.tape.bind(self.v0) + np.zeros((M, 1))
        return self.v0_net(self.features(x, tfrac))

    def step(self, x: Var, tfrac: float, hs, cs):
        """One value-gradient evaluation; returns (V_x (M,n), hs', cs')."""
        return self.vx_net.step(self.features(x, tfrac), hs, cs)

    def parameters(self):
        yield from self.vx_net.parameters()
        if self.v0_mode == "scalar":
            yield self.v0
        else:
            yield from self.v0_net.parameters()
        if self.h0_mode == "fixed":
            for ph, pc in self.h0:
                yield ph
                yield pc
        else:
            for net in self.h0_nets:
                yield from net.parameters()

    def meta(self) -> dict:
        return {
            "n": self.n,
            "lstm_sizes": list(self.lstm_sizes),
            "v0_mode": self.v0_mode,
            "h0_mode": self.h0_mode,
            "v0_hidden": list(self.v0_hidden),
            "h0_hidden": list(self.h0_hidden),
            "whiten_center": np.asarray(self.whiten_center).ravel().tolist(),
            "whiten_scale": np.asarray(self.whiten_scale).ravel().tolist(),
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "ValueNet":
        """Rebuild the architecture a checkpoint's meta dict describes
        (weights still need load_checkpoint)."""
        return cls(int(meta["n"]), tuple(meta["lstm_sizes"]),
                   np.random.default_rng(0),
                   np.asarray(meta["whiten_center"], float),
                   np.asarray(meta["whiten_scale"], float),
                   v0_mode=meta.get("v0_mode", "scalar"),
                   h0_mode=meta.get("h0_mode", "fixed"),
                   v0_hidden=tuple(meta.get("v0_hidden", (8, 16, 8))),
                   h0_hidden=tuple(meta.get("h0_hidden", (8,))))

    def initial_hidden(self, x0) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Recurrent state values for a deployed controller starting at x0."""
        tape = Tape()
        xv = tape.leaf(np.atleast_2d(np.asarray(x0, float)))
        _, hs, cs = self.initial(xv)
        return [h.value.copy() for h in hs], [c.value.copy() for c in cs]


def control_step(net: ValueNet, model: SdeModel, spec: CostSpec, x,
                 hs_vals, cs_vals, tfrac: float):
    """One inference-only controller evaluation from stored recurrent state.

    Takes plain arrays, records a throwaway single-sample tape, and returns
    (u (m,), hs', cs') so a caller can run the controller step by step
    outside training.
    """
    tape = Tape()
    xv = tape.leaf(np.atleast_2d(np.asarray(x, float)))
    hs = [tape.leaf(h) for h in hs_vals]
    cs = [tape.leaf(c) for c in cs_vals]
    vx, hs2, cs2 = net.step(xv, tfrac, hs, cs)
    u = optimal_control(vx, xv, spec, model)
    return u.value[0].copy(), [h.value for h in hs2], [c.value for c in cs2]


def control_preactivation(V_x, x, spec: CostSpec, model: SdeModel):
    """z = -R^{-1} G(x)^T V_x; u* = u_max tanh(z/2). Returns (z, gtv)."""
    gtv = model.gtv(x, V_x)
    return gtv * (-1.0 / spec.R), gtv


def optimal_control(V_x, x, spec: CostSpec, model: SdeModel):
    """Saturated optimal control u* = u_max sig(-R^{-1} G^T V_x), (M, m);
    strictly inside the saturation box."""
    z, _ = control_preactivation(V_x, x, spec, model)
    return ops.sat(z, spec.u_max)


class RolloutBatch:
    """Tape-backed record of one batched rollout.

    Numpy views (x, y, u, run_cost, vx_sigma_dw) follow the shapes
    [M, N+1, n], [M, N+1], [M, N, m], [M, N], [M, N]; the *_vars lists keep
    the tape handles the losses are built from. `alive` marks rows that
    stayed finite; `dropped` counts rows that did not.
    """

    def __init__(self, tape, dt, xs, ys, us, run_costs, corrs, dw, hidden,
                 alive, death_step):
        self.tape: Tape = tape
        self.dt = float(dt)
        self.x_vars = xs
        self.y_vars = ys
        self.u_vars = us
        self._run_costs = run_costs  # ndarrays (M, 1), one per step
        self.corr_vars = corrs
        self.dw = dw
        self.hidden = hidden
        self.alive = alive
        self.death_step = death_step
        self.dropped = int(np.sum(~alive))

    @property
    def n_steps(self) -> int:
        return len(self.u_vars)

    @property
    def x(self) -> np.ndarray:
        return np.stack([v.value for v in self.x_vars], axis=1)

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([v.value for v in self.y_vars], axis=1)

    @property
    def u(self) -> np.ndarray:
        return np.stack([v.value for v in self.u_vars], axis=1)

    @property
    def run_cost(self) -> np.ndarray:
        return np.concatenate(self._run_costs, axis=1)

    @property
    def vx_sigma_dw(self) -> np.ndarray:
        return np.concatenate([v.value for v in self.corr_vars], axis=1)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.x_vars))


def rollout(net: ValueNet, model: SdeModel, costs: CostSpec, pen, x0,
            noise: np.ndarray, dt: float, sigma: float | None = None,
            stop_dynamics_grad: bool = False,
            on_divergence: str = "mask") -> RolloutBatch:
    """Forward-integrate states and value estimates for the whole batch.

    noise has shape (M, N, m) with entries ~ N(0, dt); x0 is (M, n) or (n,).
    """
    if on_divergence not in ("mask", "raise"):
        raise UsageError("on_divergence must be mask|raise")
    noise = np.asarray(noise, float)
    M, N, mdim = noise.shape
    x0 = np.asarray(x0, float)
    if x0.ndim == 1:
        x0 = np.broadcast_to(x0, (M, x0.size))
    s = model.noise_scale if sigma is None else float(sigma)
    T = N * dt

    tape = Tape()
    x = tape.leaf(x0)
    y, hs, cs = net.initial(x)

    xs, ys, us, run_costs, corrs = [x], [y], [], [], []
    alive = np.ones(M, dtype=bool)
    death_step = np.full(M, -1, dtype=np.int64)

    for k in range(N):
        tfrac = (k * dt) / T
        vx, hs, cs = net.step(x, tfrac, hs, cs)
        z, gtv = control_preactivation(vx, x, costs, model)
        u = tape.sat(z, costs.u_max)
        dw = noise[:, k, :]

        q = quad_cost(x, costs.Q, costs.target)
        rc = control_cost_z(z, costs)
        parts = [q, rc]
        p = penalty(x, pen)
        if isinstance(p, Var):
            parts.append(p)
        corr = tape.wdot(gtv, dw, s)
        y_next = tape.yupdate(y, corr, dt, parts)
        x_next = x + model.em_increment(x, u, dw, dt, s)
        running = q.value + rc.value
        if isinstance(p, Var):
            running = running + p.value

        finite = (np.isfinite(x_next.value).all(axis=1)
                  & np.isfinite(y_next.value).ravel())
        newly_dead = alive & ~finite
        if newly_dead.any():
            if on_divergence == "raise":
                j = int(np.argmax(newly_dead))
                raise IntegrationBlowup(
                    f"batch row {j} diverged at step {k + 1}", step=k + 1)
            alive &= finite
            death_step[newly_dead] = k + 1
            dead = ~alive
            x_next = ops.guard(x_next, dead)
            y_next = ops.guard(y_next, dead)

        if stop_dynamics_grad:
            x_next = ops.stopgrad(x_next)

        us.append(u)
        run_costs.append(running)
        corrs.append(corr)
        x, y = x_next, y_next
        xs.append(x)
        ys.append(y)

    hidden = ([h.value for h in hs], [c.value for c in cs])
    return RolloutBatch(tape, dt, xs, ys, us, run_costs, corrs, noise,
                        hidden, alive, death_step)


def _alive_mask_col(batch: RolloutBatch) -> np.ndarray | float:
    if batch.dropped == 0:
        return 1.0
    return batch.alive.astype(float).reshape(-1, 1)


def fbsde_loss(batch: RolloutBatch, q_N, reduction: str = "sum"):
    """Sum over the batch of (q_N(x_N) - y_N)^2 (Eq.-17 style terminal
    mismatch); `q_N` maps the terminal state Var to (M, 1) on the tape.
    Diverged rows are excluded. reduction="mean" divides by surviving rows."""
    if reduction not in ("sum", "mean"):
        raise UsageError("reduction must be sum|mean")
    resid = q_N(batch.x_vars[-1]) - batch.y_vars[-1]
    resid = resid * _alive_mask_col(batch)
    loss = batch.tape.sum(ops.square(resid))
    if reduction == "mean":
        n_alive = max(int(np.sum(batch.alive)), 1)
        loss = loss * (1.0 / n_alive)
    return loss


def value_target(batch: RolloutBatch, k: int, q_N) -> np.ndarray:
    """Measured cost-to-go target at step k, (M, 1) ndarray, detached:
    q_N(x_N) + sum_{i>=k} ((qbar+r) dt - V_x^T Sigma dw)."""
    return value_targets(batch, q_N)[:, k : k + 1]


def value_targets(batch: RolloutBatch, q_N) -> np.ndarray:
    """All targets, (M, N+1); column k is the Eq.-18 suffix sum."""
    x_N = batch.x_vars[-1].value
    qn = np.asarray(ops.value(q_N(x_N)), float).reshape(-1, 1)
    steps = batch.run_cost * batch.dt - batch.vx_sigma_dw  # (M, N)
    out = np.empty((qn.shape[0], batch.n_steps + 1))
    out[:, -1] = qn[:, 0]
    acc = qn[:, 0].copy()
    for i in range(batch.n_steps - 1, -1, -1):
        acc = acc + steps[:, i]
        out[:, i] = acc
    return out


def hybrid_loss(batch: RolloutBatch, net: ValueNet, q_N, lam: float,
                reduction: str = "sum"):
    """fbsde_loss plus lam * sum over all steps of the v0-head regression
    onto detached cost-to-go targets. q_N should already include the reset
    map (terminal cost of the post-jump state); the same callable evaluates
    on the tape for the FBSDE term and on ndarrays for the targets."""
    if net.v0_mode != "mlp":
        raise UsageError("hybrid loss needs the network v0 head (v0_mode=mlp)")
    loss = fbsde_loss(batch, q_N, reduction)
    targets = value_targets(batch, q_N)
    mask = _alive_mask_col(batch)
    tape = batch.tape
    T = batch.n_steps * batch.dt
    lv = None
    for i, xv in enumerate(batch.x_vars):
        xi = tape.leaf(xv.value)  # value-net input detached from dynamics
        vi = net.v0_eval(xi, (i * batch.dt) / T)
        ri = (vi - targets[:, i : i + 1]) * mask
        term = tape.sum(ops.square(ri))
        lv = term if lv is None else lv + term
    if reduction == "mean":
        n_alive = max(int(np.sum(batch.alive)), 1)
        lv = lv * (1.0 / n_alive)
    return loss + lam * lv
