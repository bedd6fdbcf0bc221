"""Training loop, evaluation metrics, and controller latency measurement.

`train` runs plain gradient descent on the rollout loss: each iteration
draws fresh Brownian increments, integrates the batch forward on one tape,
backpropagates the terminal (or hybrid) mismatch, and takes one Adam step.
The penalty steepness scheduler ticks once per iteration on the episode-cost
window and the constraint-satisfaction flag; a fired tick changes the
steepness used from the next iteration on.

Reproducibility: all randomness is drawn from counter-based Philox streams
keyed by (seed, purpose tag, iteration), so a run is bit-reproducible
regardless of global RNG state and independent of how many iterations any
previous run consumed.

Failure policy: a non-finite loss or a batch where more than
`max_drop_fraction` of the rows diverged aborts the run with TrainingAbort
(carrying the iteration); checkpoints and log lines written so far are kept.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass

import numpy as np

from .checkpoint import save_checkpoint
from .costs import CostSpec, terminal_cost
from .dynamics.base import SdeModel
from .engine import (RolloutBatch, ValueNet, control_step, fbsde_loss,
                     hybrid_loss, rollout, value_target)
from .errors import ConfigError, TrainingAbort
from .optim import Adam
from .penalties import (ConstraintSpec, PenaltySpec, ScheduleState,
                        excursions, schedule_update, violations)

__all__ = ["TrainConfig", "Metrics", "train", "evaluate", "measure_latency"]

# Philox stream tags: one purpose per tag so streams never collide.
_TAG_NOISE = 0
_TAG_X0 = 1
_TAG_EVAL_NOISE = 2
_TAG_EVAL_X0 = 3


def stream(seed: int, tag: int, counter: int = 0) -> np.random.Generator:
    """Counter-based generator for (seed, tag, counter); order-independent."""
    key = np.array([np.uint64(seed), np.uint64((tag << 48) + counter)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class TrainConfig:
    """Everything one training run needs besides the problem objects."""

    iterations: int
    n_steps: int
    dt: float
    x0: np.ndarray
    batch_size: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 10.0
    sigma: float | None = None
    mode: str = "terminal"  # terminal | hybrid
    lam: float = 1.0
    loss_reduction: str = "sum"
    seed: int = 0
    x0_halfwidth: np.ndarray | None = None
    reset_terminal: bool = False
    checkpoint_every: int = 0
    max_drop_fraction: float = 0.5

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, float).reshape(-1)
        if self.x0_halfwidth is not None:
            self.x0_halfwidth = np.asarray(self.x0_halfwidth, float).reshape(-1)
            if self.x0_halfwidth.shape != self.x0.shape:
                raise ConfigError("x0_halfwidth must match x0 in length")
            if np.any(self.x0_halfwidth < 0.0):
                raise ConfigError("x0_halfwidth entries must be >= 0")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if not self.dt > 0.0:
            raise ConfigError("dt must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.lr > 0.0:
            raise ConfigError("lr must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("beta1/beta2 must lie in [0, 1)")
        if not self.eps > 0.0:
            raise ConfigError("eps must be positive")
        if self.clip_norm is not None and not self.clip_norm > 0.0:
            raise ConfigError("clip_norm must be positive or None")
        if self.sigma is not None and self.sigma < 0.0:
            raise ConfigError("sigma must be >= 0")
        if self.mode not in ("terminal", "hybrid"):
            raise ConfigError("mode must be terminal|hybrid")
        if self.lam < 0.0:
            raise ConfigError("lam must be >= 0")
        if self.loss_reduction not in ("sum", "mean"):
            raise ConfigError("loss_reduction must be sum|mean")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        if not 0.0 <= self.max_drop_fraction <= 1.0:
            raise ConfigError("max_drop_fraction must lie in [0, 1]")


def terminal_fn(model: SdeModel, costs: CostSpec, pen: PenaltySpec | None,
                reset_terminal: bool):
    """Terminal-cost callable q_N, with the reset map composed in if asked.

    Works on tape variables and on plain arrays alike, so the same callable
    serves the loss, the value targets, and evaluation.
    """
    if reset_terminal:
        def q_n(x):
            return terminal_cost(model.heel_strike(x), costs, pen)
    else:
        def q_n(x):
            return terminal_cost(x, costs, pen)
    return q_n


def _sample_x0(cfg: TrainConfig, tag: int, it: int) -> np.ndarray:
    x0 = np.tile(cfg.x0, (cfg.batch_size, 1))
    if cfg.x0_halfwidth is not None and np.any(cfg.x0_halfwidth > 0.0):
        rng = stream(cfg.seed, tag, it)
        x0 += rng.uniform(-1.0, 1.0, x0.shape) * cfg.x0_halfwidth
    return x0


def _trial_violations(batch: RolloutBatch, con: ConstraintSpec | None) -> int:
    """Trials that left the constraint set at any step; divergers count."""
    if con is None:
        return batch.dropped
    xs = batch.x
    M = xs.shape[0]
    bad = violations(xs.reshape(M * xs.shape[1], -1), con)
    bad = bad.reshape(M, -1).any(axis=1)
    return int(np.count_nonzero(bad & batch.alive)) + batch.dropped


def _scalar(v) -> float:
    return float(np.asarray(v).reshape(-1)[0])


def train(cfg: TrainConfig, model: SdeModel, costs: CostSpec, net: ValueNet,
          pen: PenaltySpec | None = None, sched: ScheduleState | None = None,
          *, constraint: ConstraintSpec | None = None, out_dir: str | None = None,
          log_name: str = "train_log.jsonl") -> list[dict]:
    """Run cfg.iterations gradient steps in place on net; returns the log.

    One log record per iteration: iteration, loss, mean_episode_cost (over
    surviving rows), k (the steepness the iteration actually used),
    violations (trials outside the constraint set, divergers included),
    dropped, grad_norm, wall_ms; iterations where the scheduler fired also
    carry the post-update scheduler snapshot. With out_dir set the records
    are streamed to <out_dir>/<log_name> as JSON lines and checkpoints are
    written every checkpoint_every iterations plus once at the end.
    """
    if sched is not None and pen is None:
        raise ConfigError("a schedule needs a penalty to act on")
    con = pen.constraint if pen is not None else constraint
    q_n = terminal_fn(model, costs, pen, cfg.reset_terminal)
    opt = Adam(net.parameters(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
               eps=cfg.eps, clip_norm=cfg.clip_norm)
    if sched is not None:
        pen.steepness = sched.k

    log: list[dict] = []
    log_f = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_f = open(os.path.join(out_dir, log_name), "w", encoding="utf-8")
    try:
        for it in range(cfg.iterations):
            t0 = time.perf_counter()
            noise = stream(cfg.seed, _TAG_NOISE, it).normal(
                0.0, np.sqrt(cfg.dt), (cfg.batch_size, cfg.n_steps, model.m))
            x0 = _sample_x0(cfg, _TAG_X0, it)
            k_used = pen.steepness if pen is not None else 0.0

            batch = rollout(net, model, costs, pen, x0, noise, cfg.dt,
                            sigma=cfg.sigma)
            if batch.dropped > cfg.max_drop_fraction * cfg.batch_size:
                raise TrainingAbort(
                    f"{batch.dropped}/{cfg.batch_size} trajectories diverged",
                    iteration=it)
            if cfg.mode == "hybrid":
                loss = hybrid_loss(batch, net, q_n, cfg.lam,
                                   reduction=cfg.loss_reduction)
            else:
                loss = fbsde_loss(batch, q_n, reduction=cfg.loss_reduction)
            loss_val = _scalar(loss.value)
            if not np.isfinite(loss_val):
                raise TrainingAbort(f"non-finite loss {loss_val!r}",
                                    iteration=it)
            grads = batch.tape.backward(loss)
            grad_norm = opt.step(grads)

            targets0 = value_target(batch, 0, q_n)[:, 0]
            ec = float(np.mean(targets0[batch.alive]))
            bad = _trial_violations(batch, con)

            rec = {
                "iteration": it,
                "loss": loss_val,
                "mean_episode_cost": ec,
                "k": float(k_used),
                "violations": bad,
                "dropped": batch.dropped,
                "grad_norm": float(grad_norm),
                "wall_ms": (time.perf_counter() - t0) * 1e3,
            }
            if sched is not None:
                if schedule_update(sched, ec, bad == 0):
                    pen.steepness = sched.k
                    rec["schedule"] = sched.snapshot()
            log.append(rec)
            if log_f is not None:
                log_f.write(json.dumps(rec) + "\n")
                log_f.flush()

            if (out_dir is not None and cfg.checkpoint_every > 0
                    and (it + 1) % cfg.checkpoint_every == 0):
                _save(out_dir, f"checkpoint_{it + 1:06d}.bin", net, cfg, it + 1)
    finally:
        if log_f is not None:
            log_f.close()
    if out_dir is not None:
        _save(out_dir, "checkpoint_final.bin", net, cfg, cfg.iterations)
    return log


def _save(out_dir: str, name: str, net: ValueNet, cfg: TrainConfig,
          iteration: int) -> None:
    meta = dict(net.meta())
    meta.update({"iteration": iteration, "seed": cfg.seed,
                 "dt": cfg.dt, "n_steps": cfg.n_steps})
    save_checkpoint(os.path.join(out_dir, name), net.parameters(), meta)


@dataclass
class Metrics:
    """Closed-loop controller statistics over a batch of evaluation trials.

    Costs average the surviving trials only; violation counts treat a
    diverged trial as violating at every step.
    """

    trials: int
    episode_cost_mean: float
    episode_cost_std: float
    terminal_error: float
    violation_rate: float
    violation_step_fraction: float
    worst_excursion: float
    diverged: int

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "episode_cost_mean": self.episode_cost_mean,
            "episode_cost_std": self.episode_cost_std,
            "terminal_error": self.terminal_error,
            "violation_rate": self.violation_rate,
            "violation_step_fraction": self.violation_step_fraction,
            "worst_excursion": self.worst_excursion,
            "diverged": self.diverged,
        }


def evaluate(net: ValueNet, model: SdeModel, costs: CostSpec, *, trials: int,
             n_steps: int, dt: float, x0, sigma: float | None = None,
             constraint: ConstraintSpec | None = None, seed: int = 0,
             x0_halfwidth=None, reset_terminal: bool = False
             ) -> tuple[Metrics, RolloutBatch]:
    """Roll the trained controller forward and score it.

    The episode cost is the realised objective (running cost plus terminal
    cost, no penalty and no noise correction), so constrained and
    unconstrained controllers are compared on the same scale.
    """
    x0 = np.asarray(x0, float).reshape(-1)
    x0b = np.tile(x0, (trials, 1))
    if x0_halfwidth is not None:
        hw = np.asarray(x0_halfwidth, float).reshape(-1)
        x0b += stream(seed, _TAG_EVAL_X0).uniform(-1.0, 1.0, x0b.shape) * hw
    noise = stream(seed, _TAG_EVAL_NOISE).normal(
        0.0, np.sqrt(dt), (trials, n_steps, model.m))
    batch = rollout(net, model, costs, None, x0b, noise, dt, sigma=sigma)
    q_n = terminal_fn(model, costs, None, reset_terminal)

    cost = batch.run_cost.sum(axis=1) * dt + q_n(batch.x[:, -1, :])[:, 0]
    alive = batch.alive
    n_alive = int(np.count_nonzero(alive))
    if n_alive == 0:
        cost_mean = cost_std = term_err = float("nan")
    else:
        cost_mean = float(np.mean(cost[alive]))
        cost_std = float(np.std(cost[alive]))
        d = batch.x[alive, -1, :] - costs.target
        term_err = float(np.mean(np.linalg.norm(d, axis=1)))

    n_pairs = trials * (n_steps + 1)
    if constraint is None:
        v_rate = batch.dropped / trials
        v_steps = batch.dropped * (n_steps + 1) / n_pairs
        worst = 0.0
    else:
        xs = batch.x
        flat = xs.reshape(trials * (n_steps + 1), -1)
        bad = violations(flat, constraint).reshape(trials, -1)
        bad[~alive, :] = True
        v_rate = float(np.mean(bad.any(axis=1)))
        v_steps = float(np.mean(bad))
        exc = excursions(flat, constraint).reshape(trials, n_steps + 1, -1)
        worst = float(exc[alive].max()) if n_alive else float("inf")
    m = Metrics(trials=trials, episode_cost_mean=cost_mean,
                episode_cost_std=cost_std, terminal_error=term_err,
                violation_rate=float(v_rate),
                violation_step_fraction=float(v_steps),
                worst_excursion=worst, diverged=batch.dropped)
    return m, batch


def measure_latency(net: ValueNet, model: SdeModel, costs: CostSpec, x0, *,
                    n_calls: int = 10000, n_steps: int = 100) -> dict:
    """Wall-clock cost of one deployed control evaluation, in milliseconds.

    Replays the controller exactly as deployed: recurrent state carried
    between calls and reset at episode boundaries every n_steps calls. Each
    timed call covers one value-gradient step plus the control formula.
    """
    x0 = np.asarray(x0, float).reshape(1, -1)
    hs0, cs0 = net.initial_hidden(x0)
    hs, cs = hs0, cs0
    times = np.empty(n_calls)
    k = 0
    for i in range(n_calls):
        t0 = time.perf_counter()
        _, hs, cs = control_step(net, model, costs, x0, hs, cs, k / n_steps)
        times[i] = (time.perf_counter() - t0) * 1e3
        k += 1
        if k == n_steps:
            k = 0
            hs, cs = hs0, cs0
    return {
        "calls": int(n_calls),
        "median_ms": float(np.median(times)),
        "mean_ms": float(np.mean(times)),
        "p99_ms": float(np.percentile(times, 99.0)),
        "max_ms": float(np.max(times)),
    }
