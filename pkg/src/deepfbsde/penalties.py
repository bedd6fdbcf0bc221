"""State-constraint penalties and the adaptive steepness scheduler.

Constraints are linear maps c(x) = C x with per-row bounds; rows may be
one-sided (infinite on one end). Two penalty shapes:

logistic (bounded, smooth): per row, with s(a) = 1/(1+e^{-a}) and midpoint
mu = (b_min+b_max)/2,

    p(c) = L s(k (c - b_max)) - L s(k (c - b_min)) + L - 2 L s(k (mu - b_max))

which is 0 at mu, symmetric about mu, bounded in [0, 2L), and saturates at
L - 2L s(-k w/2) = L tanh(k w / 4) as |c| grows (w = b_max - b_min). One-sided
rows use the limit forms L s(k (c - b_max)) and L s(k (b_min - c)), which
vanish deep inside the feasible halfspace.

relu (unbounded, piecewise linear): k * alpha * sum(relu(b_min - c) +
relu(c - b_max)); exactly zero on the feasible set, slope k*alpha outside,
subgradient 0 at the kink.

The scheduler grows k during training (one `update` per iteration): every
`interval` iterations while constraints are still violated, if the standard
deviation of the cost window fell below the threshold beta, or
unconditionally every `max_interval` iterations, apply

    k += delta; delta += step_change; beta *= decay; decay += decay_growth

then clamp delta >= 0 and decay <= 1. beta, when not set explicitly, is
initialized to threshold_scale times the first full window's standard
deviation. Once trajectories satisfy the constraints the schedule freezes
(configurable to keep adapting instead).
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import ops


class ConstraintSpec:
    """c(x) = C x with rows (r, n) and bounds lower/upper (r,), +-inf allowed."""

    def __init__(self, C, lower, upper, names=None):
        self.C = np.atleast_2d(np.asarray(C, float))
        self.lower = np.asarray(lower, float).reshape(-1)
        self.upper = np.asarray(upper, float).reshape(-1)
        r = self.C.shape[0]
        if self.lower.shape != (r,) or self.upper.shape != (r,):
            raise ValueError("bounds must have one entry per constraint row")
        if np.any(self.lower >= self.upper):
            raise ValueError("need lower < upper rowwise")
        self.names = list(names) if names else [f"c{i}" for i in range(r)]

    @property
    def r(self) -> int:
        return self.C.shape[0]

    def value(self, x):
        """c(x) batched -> (M, r)."""
        return ops.matmul(x, self.C.T)


class PenaltySpec:
    """kind in {none, logistic, relu}; steepness k is the scheduled knob."""

    def __init__(self, kind: str, constraint: ConstraintSpec | None = None,
                 max_value: float = 5.0, steepness: float = 1.0,
                 slope: float = 1.0):
        if kind not in ("none", "logistic", "relu"):
            raise ValueError(f"unknown penalty kind {kind!r}")
        if kind != "none" and constraint is None:
            raise ValueError("penalty needs a constraint map")
        if kind == "logistic" and max_value <= 0.0:
            raise ValueError("logistic max_value must be positive")
        if steepness <= 0.0:
            raise ValueError("steepness must be positive")
        if slope < 0.0:
            raise ValueError("slope must be non-negative")
        self.kind = kind
        self.constraint = constraint
        self.max_value = float(max_value)
        self.steepness = float(steepness)
        self.slope = float(slope)


def _logistic_const_sum(con: ConstraintSpec, L: float, k: float) -> float:
    """Per-row additive constants of the uniform logistic form.

    Rows are evaluated as L [s(k(c-hi)) - s(k(c-lo))] + const with infinite
    bounds saturating the sigmoid; const is L - 2L s(k(mu-hi)) for two-sided
    rows (zero at the midpoint) and L for one-sided rows (zero deep inside
    the feasible halfspace).
    """
    total = 0.0
    for i in range(con.r):
        lo, hi = con.lower[i], con.upper[i]
        if np.isfinite(lo) and np.isfinite(hi):
            mu = 0.5 * (lo + hi)
            total += L - 2.0 * L / (1.0 + math.exp(-k * (mu - hi)))
        else:
            total += L
    return total


def logistic_penalty(x, pen: PenaltySpec):
    """Summed logistic penalty, (M, 1)."""
    con = pen.constraint
    L, k = pen.max_value, pen.steepness
    c = con.value(x)
    return ops.penlog(c, con.lower, con.upper, L, k,
                      _logistic_const_sum(con, L, k))


def relu_penalty(x, pen: PenaltySpec):
    """Summed ReLU penalty, (M, 1)."""
    con = pen.constraint
    c = con.value(x)
    return ops.penrelu(c, con.lower, con.upper, pen.steepness * pen.slope)


def penalty(x, pen: PenaltySpec | None):
    """Dispatch on pen.kind; 0.0 for none (cheap to add to any cost)."""
    if pen is None or pen.kind == "none":
        return 0.0
    if pen.kind == "logistic":
        return logistic_penalty(x, pen)
    return relu_penalty(x, pen)


def violations(x, con: ConstraintSpec) -> np.ndarray:
    """Boolean (M,): any constraint row strictly outside its bounds."""
    c = np.atleast_2d(np.asarray(ops.value(x), float)) @ con.C.T
    return np.any((c < con.lower) | (c > con.upper), axis=1)


def excursions(x, con: ConstraintSpec) -> np.ndarray:
    """Nonnegative violation distances per row, (M, r)."""
    c = np.atleast_2d(np.asarray(ops.value(x), float)) @ con.C.T
    return np.maximum(np.maximum(con.lower - c, c - con.upper), 0.0)


class ScheduleState:
    """Algorithm state for adaptive penalty steepening; one instance per run."""

    def __init__(self, steepness: float, steepness_step: float = 0.5,
                 step_change: float = -0.25, threshold: float | None = None,
                 threshold_scale: float = 1.0, threshold_decay: float = 0.9,
                 decay_growth: float = 0.02, interval: int = 500,
                 max_interval: int = 1000, on_satisfied: str = "freeze"):
        if interval < 1 or max_interval < interval or max_interval % interval:
            raise ValueError("need max_interval a multiple of interval >= 1")
        if on_satisfied not in ("freeze", "continue"):
            raise ValueError("on_satisfied must be freeze|continue")
        self.k = float(steepness)
        self.delta = float(steepness_step)
        self.step_change = float(step_change)
        self.beta = None if threshold is None else float(threshold)
        self.threshold_scale = float(threshold_scale)
        self.decay = float(threshold_decay)
        self.decay_growth = float(decay_growth)
        self.interval = int(interval)
        self.max_interval = int(max_interval)
        self.on_satisfied = on_satisfied
        self.iteration = 0
        self.window: list[float] = []
        self.frozen = False

    def snapshot(self) -> dict:
        return {
            "k": self.k, "delta": self.delta, "beta": self.beta,
            "decay": self.decay, "iteration": self.iteration,
            "frozen": self.frozen,
        }


def schedule_update(sched: ScheduleState, episode_cost: float,
                    constraints_satisfied: bool) -> bool:
    """One per-iteration scheduler tick; returns True when k changed."""
    sched.iteration += 1
    sched.window.append(float(episode_cost))
    if len(sched.window) > sched.interval:
        sched.window.pop(0)
    if sched.frozen:
        return False
    if constraints_satisfied:
        if sched.on_satisfied == "freeze":
            sched.frozen = True
        return False
    if sched.iteration % sched.interval != 0:
        return False
    sd = float(np.sqrt(np.var(sched.window)))
    fire = False
    if sched.beta is None:
        sched.beta = sched.threshold_scale * sd
        fire = sched.iteration % sched.max_interval == 0
    else:
        fire = sd < sched.beta or sched.iteration % sched.max_interval == 0
    if fire:
        sched.k += sched.delta
        sched.delta += sched.step_change
        sched.beta = sched.decay * sched.beta
        sched.decay += sched.decay_growth
    if sched.delta < 0.0:
        sched.delta = 0.0
    if sched.decay > 1.0:
        sched.decay = 1.0
    return fire
