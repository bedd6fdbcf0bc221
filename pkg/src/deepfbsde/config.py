"""Experiment configuration: presets, strict validation, and builders.

A config is one JSON document. `environment` picks a preset (cartpole,
biped, lq-toy) whose defaults fill in everything the user file leaves out;
`--set path=value` overrides land on top. The merged document is validated
strictly — unknown keys and type errors are reported with their full field
path — and the result is the *resolved* config: pure JSON types, every field
explicit, suitable for bit-exact reruns. `resolve(resolved_doc)` is the
identity, and every run writes its resolved config next to its artifacts.

Builders (`build_model`, `build_costs`, ...) turn a resolved config into the
library objects; they never mutate the document.

Schema (paths as they appear in error messages):

  environment            cartpole | biped | lq-toy
  output_dir             str
  dynamics.*             environment-specific physical parameters + sigma
  cost.{Q,Q_terminal}    n x n row-major matrices
  cost.{R,u_max}         length-m positive diagonals / saturation levels
  cost.target            length-n state
  cost.terminal_penalty  bool: add the penalty to the terminal cost
  constraint             null, or {C: r x n, lower: r, upper: r} with null
                         entries in lower/upper meaning unbounded
  penalty                {kind: none|logistic|relu, max_value, steepness,
                          slope}
  penalty_schedule       null, or {steepness_step, step_change, threshold,
                          threshold_scale, threshold_decay, decay_growth,
                          interval, max_interval, on_satisfied}; the initial
                          steepness comes from penalty.steepness
  train.*                N_I, N, dt, M, lr, beta1, beta2, eps, clip_norm,
                         lambda, sigma (null = dynamics.sigma), mode
                         (continuous|hybrid), loss_reduction, seed,
                         eval_trials, checkpoint_every, x0, x0_halfwidth,
                         reset_terminal, max_drop_fraction
  network.*              lstm_sizes, v0_mode, h0_mode, v0_hidden, h0_hidden,
                         whiten_center, whiten_scale, init_seed
  ensemble               null, or {nominal_states: list of length-n states,
                          n_footsteps, footstep_steps}
"""

from __future__ import annotations

import copy
import json
import math

import numpy as np

from .costs import CostSpec
from .dynamics.biped import BipedModel, BipedParams
from .dynamics.cartpole import CartPoleModel
from .dynamics.lintoy import DoubleIntegratorModel
from .engine import ValueNet
from .errors import ConfigError
from .penalties import ConstraintSpec, PenaltySpec, ScheduleState
from .training import TrainConfig

__all__ = ["ENVIRONMENTS", "preset", "resolve", "load_config", "apply_set",
           "build_model", "build_costs", "build_constraint", "build_penalty",
           "build_schedule", "build_net", "build_train_config"]

ENVIRONMENTS = ("cartpole", "biped", "lq-toy")

_TRAIN_DEFAULTS = {
    "lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "clip_norm": 10.0,
    "lambda": 1.0, "sigma": None, "loss_reduction": "sum", "seed": 0,
    "eval_trials": 256, "checkpoint_every": 0, "x0_halfwidth": None,
    "reset_terminal": False, "max_drop_fraction": 0.5,
}

_NETWORK_DEFAULTS = {
    "v0_mode": "scalar", "h0_mode": "fixed",
    "v0_hidden": [8, 16, 8], "h0_hidden": [8], "init_seed": 0,
}


def _cartpole_preset() -> dict:
    return {
        "environment": "cartpole",
        "output_dir": "runs/cartpole",
        "dynamics": {"cart_mass": 1.0, "pole_mass": 0.01, "pole_length": 0.5,
                     "gravity": 9.81, "sigma": 1.0},
        "cost": {
            "Q": np.diag([0.5, 1.0, 0.1, 0.1]).tolist(),
            "Q_terminal": np.diag([0.5, 1.0, 0.1, 0.1]).tolist(),
            "R": [0.1],
            "target": [0.0, math.pi, 0.0, 0.0],
            "u_max": [10.0],
            "terminal_penalty": False,
        },
        "constraint": {
            "C": [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
            "lower": [-1.5, -2.5],
            "upper": [1.5, 2.5],
        },
        "penalty": {"kind": "logistic", "max_value": 5.0, "steepness": 1.5,
                    "slope": 1.0},
        "penalty_schedule": {
            "steepness_step": 0.5, "step_change": 0.25, "threshold": None,
            "threshold_scale": 1.0, "threshold_decay": 0.9,
            "decay_growth": 0.02, "interval": 250, "max_interval": 500,
            "on_satisfied": "freeze",
        },
        "train": dict(_TRAIN_DEFAULTS, **{
            "N_I": 4000, "N": 275, "dt": 1.0 / 110.0, "M": 128,
            "mode": "continuous", "x0": [0.0, 0.0, 0.0, 0.0],
        }),
        "network": dict(_NETWORK_DEFAULTS, **{
            "lstm_sizes": [16, 16],
            "whiten_center": [0.0, math.pi / 2.0, 0.0, 0.0],
            "whiten_scale": [1.0, 2.0, 2.0, 4.0],
        }),
        "ensemble": None,
    }


def _biped_preset() -> dict:
    xbar = [0.10, 0.50, -0.10, -0.35, -0.40,
            0.0, 0.0, 0.0, 0.0, 0.0]
    knee_row = [0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    return {
        "environment": "biped",
        "output_dir": "runs/biped",
        "dynamics": {
            "masses": [3.2, 6.8, 20.0, 6.8, 3.2],
            "inertias": [0.93, 1.08, 2.22, 1.08, 0.93],
            "lengths": [0.4, 0.4, 0.625, 0.4, 0.4],
            "com_offsets": [0.128, 0.163, 0.2, 0.163, 0.128],
            "gravity": 9.81,
            "sigma": 0.5,
        },
        "cost": {
            "Q": (10.0 * np.eye(10)).tolist(),
            "Q_terminal": (100.0 * np.eye(10)).tolist(),
            "R": [2.0, 0.2, 0.2, 2.0],
            "target": xbar,
            "u_max": [40.0, 80.0, 80.0, 40.0],
            "terminal_penalty": False,
        },
        "constraint": {"C": [knee_row], "lower": [0.0], "upper": [None]},
        "penalty": {"kind": "relu", "max_value": 5.0, "steepness": 1.0,
                    "slope": 10.0},
        "penalty_schedule": None,
        "train": dict(_TRAIN_DEFAULTS, **{
            "N_I": 6000, "N": 50, "dt": 0.01, "M": 64,
            "mode": "hybrid", "x0": list(xbar), "reset_terminal": True,
            "x0_halfwidth": [math.radians(3.0)] * 5 + [math.radians(9.5)] * 5,
        }),
        "network": dict(_NETWORK_DEFAULTS, **{
            "lstm_sizes": [32, 32],
            "v0_mode": "mlp", "h0_mode": "mlp",
            "whiten_center": list(xbar),
            "whiten_scale": [0.3] * 5 + [1.5] * 5,
        }),
        "ensemble": {
            "nominal_states": [list(xbar)],
            "n_footsteps": 3,
            "footstep_steps": 50,
        },
    }


def _lq_preset() -> dict:
    return {
        "environment": "lq-toy",
        "output_dir": "runs/lq-toy",
        "dynamics": {"sigma": 0.1},
        "cost": {
            "Q": [[1.0, 0.0], [0.0, 0.1]],
            "Q_terminal": [[1.0, 0.0], [0.0, 0.1]],
            "R": [0.05],
            "target": [0.0, 0.0],
            "u_max": [4.0],
            "terminal_penalty": False,
        },
        "constraint": None,
        "penalty": {"kind": "none", "max_value": 5.0, "steepness": 1.0,
                    "slope": 1.0},
        "penalty_schedule": None,
        "train": dict(_TRAIN_DEFAULTS, **{
            "N_I": 800, "N": 40, "dt": 0.025, "M": 64,
            "mode": "continuous", "x0": [1.0, 0.0], "lr": 3e-3,
        }),
        "network": dict(_NETWORK_DEFAULTS, **{
            "lstm_sizes": [16],
            "whiten_center": [0.0, 0.0],
            "whiten_scale": [1.0, 1.0],
        }),
        "ensemble": None,
    }


_PRESETS = {"cartpole": _cartpole_preset, "biped": _biped_preset,
            "lq-toy": _lq_preset}


def preset(environment: str) -> dict:
    if environment not in _PRESETS:
        raise ConfigError(
            f"environment: unknown environment {environment!r} "
            f"(expected one of {', '.join(ENVIRONMENTS)})")
    return _PRESETS[environment]()


# ----------------------------------------------------------------- merging

def _deep_merge(base, override, path):
    """User values override preset values; dicts merge recursively."""
    if isinstance(base, dict) and isinstance(override, dict):
        out = dict(base)
        for k, v in override.items():
            out[k] = _deep_merge(base.get(k), v, f"{path}.{k}" if path else k)
        return out
    return copy.deepcopy(override)


def apply_set(doc: dict, assignment: str) -> None:
    """Apply one `path.to.key=value` override in place; value parses as JSON
    first, then as a bare string."""
    head, sep, raw = assignment.partition("=")
    if not sep or not head:
        raise ConfigError(f"--set needs path=value, got {assignment!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = head.split(".")
    node = doc
    for i, k in enumerate(keys[:-1]):
        nxt = node.get(k)
        if nxt is None:
            nxt = node[k] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(
                f"{'.'.join(keys[:i + 1])}: cannot set a key inside a "
                f"non-object value")
        node = nxt
    node[keys[-1]] = value


# -------------------------------------------------------------- validation

def _err(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _keys(d, path, allowed, required=()):
    if not isinstance(d, dict):
        _err(path, f"expected an object, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        _err(f"{path}.{unknown[0]}", "unknown key")
    for k in required:
        if k not in d:
            _err(f"{path}.{k}", "missing required key")


def _num(v, path, *, positive=False, nonneg=False, nullable=False):
    if v is None:
        if nullable:
            return
        _err(path, "must be a number, not null")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _err(path, f"expected a number, got {type(v).__name__}")
    if not math.isfinite(v):
        _err(path, "must be finite")
    if positive and not v > 0:
        _err(path, "must be > 0")
    if nonneg and v < 0:
        _err(path, "must be >= 0")


def _int(v, path, *, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        _err(path, f"expected an integer, got {type(v).__name__}")
    if minimum is not None and v < minimum:
        _err(path, f"must be >= {minimum}")


def _bool(v, path):
    if not isinstance(v, bool):
        _err(path, f"expected true/false, got {type(v).__name__}")


def _enum(v, path, options):
    if v not in options:
        _err(path, f"must be one of {', '.join(map(str, options))}; got {v!r}")


def _vec(v, path, n=None, *, positive=False, nonneg=False,
         null_entries=False, nullable=False):
    if v is None:
        if nullable:
            return
        _err(path, "must be a list, not null")
    if not isinstance(v, list):
        _err(path, f"expected a list, got {type(v).__name__}")
    if n is not None and len(v) != n:
        _err(path, f"expected {n} entries, got {len(v)}")
    for i, e in enumerate(v):
        if e is None and null_entries:
            continue
        _num(e, f"{path}[{i}]", positive=positive, nonneg=nonneg)


def _mat(v, path, rows, cols):
    if not isinstance(v, list):
        _err(path, f"expected a matrix (list of rows), got {type(v).__name__}")
    if rows is not None and len(v) != rows:
        _err(path, f"expected {rows} rows, got {len(v)}")
    for i, row in enumerate(v):
        _vec(row, f"{path}[{i}]", cols)


_DYNAMICS_KEYS = {
    "cartpole": ("cart_mass", "pole_mass", "pole_length", "gravity", "sigma"),
    "biped": ("masses", "inertias", "lengths", "com_offsets", "gravity",
              "sigma"),
    "lq-toy": ("sigma",),
}
_STATE_DIM = {"cartpole": 4, "biped": 10, "lq-toy": 2}
_CONTROL_DIM = {"cartpole": 1, "biped": 4, "lq-toy": 1}


def _validate(doc: dict) -> None:
    _keys(doc, "config",
          ("environment", "output_dir", "dynamics", "cost", "constraint",
           "penalty", "penalty_schedule", "train", "network", "ensemble"),
          ("environment", "output_dir", "dynamics", "cost", "penalty",
           "train", "network"))
    env = doc["environment"]
    _enum(env, "environment", ENVIRONMENTS)
    if not isinstance(doc["output_dir"], str) or not doc["output_dir"]:
        _err("output_dir", "must be a non-empty string")
    n, m = _STATE_DIM[env], _CONTROL_DIM[env]

    dyn = doc["dynamics"]
    _keys(dyn, "dynamics", _DYNAMICS_KEYS[env], _DYNAMICS_KEYS[env])
    if env == "biped":
        for k in ("masses", "inertias", "lengths", "com_offsets"):
            _vec(dyn[k], f"dynamics.{k}", 5, positive=True)
        _num(dyn["gravity"], "dynamics.gravity", positive=True)
    elif env == "cartpole":
        for k in ("cart_mass", "pole_mass", "pole_length", "gravity"):
            _num(dyn[k], f"dynamics.{k}", positive=True)
    _num(dyn["sigma"], "dynamics.sigma", nonneg=True)

    cost = doc["cost"]
    _keys(cost, "cost",
          ("Q", "Q_terminal", "R", "target", "u_max", "terminal_penalty"),
          ("Q", "Q_terminal", "R", "target", "u_max"))
    _mat(cost["Q"], "cost.Q", n, n)
    _mat(cost["Q_terminal"], "cost.Q_terminal", n, n)
    _vec(cost["R"], "cost.R", m, positive=True)
    _vec(cost["target"], "cost.target", n)
    _vec(cost["u_max"], "cost.u_max", m, positive=True)
    _bool(cost.get("terminal_penalty", False), "cost.terminal_penalty")

    con = doc.get("constraint")
    if con is not None:
        _keys(con, "constraint", ("C", "lower", "upper"),
              ("C", "lower", "upper"))
        _mat(con["C"], "constraint.C", None, n)
        r = len(con["C"])
        if r < 1:
            _err("constraint.C", "needs at least one row")
        _vec(con["lower"], "constraint.lower", r, null_entries=True)
        _vec(con["upper"], "constraint.upper", r, null_entries=True)
        for i in range(r):
            lo, hi = con["lower"][i], con["upper"][i]
            if lo is None and hi is None:
                _err(f"constraint.lower[{i}]",
                     "row has neither a lower nor an upper bound")
            if lo is not None and hi is not None and lo >= hi:
                _err(f"constraint.lower[{i}]", "must be < the upper bound")

    pen = doc["penalty"]
    _keys(pen, "penalty", ("kind", "max_value", "steepness", "slope"),
          ("kind",))
    _enum(pen["kind"], "penalty.kind", ("none", "logistic", "relu"))
    _num(pen.get("max_value", 5.0), "penalty.max_value", positive=True)
    _num(pen.get("steepness", 1.0), "penalty.steepness", positive=True)
    _num(pen.get("slope", 1.0), "penalty.slope", nonneg=True)
    if pen["kind"] != "none" and con is None:
        _err("penalty.kind", "a penalty needs a constraint section")

    sched = doc.get("penalty_schedule")
    if sched is not None:
        _keys(sched, "penalty_schedule",
              ("steepness_step", "step_change", "threshold",
               "threshold_scale", "threshold_decay", "decay_growth",
               "interval", "max_interval", "on_satisfied"),
              ("steepness_step", "interval", "max_interval"))
        _num(sched["steepness_step"], "penalty_schedule.steepness_step",
             nonneg=True)
        _num(sched.get("step_change", 0.0), "penalty_schedule.step_change")
        _num(sched.get("threshold"), "penalty_schedule.threshold",
             nullable=True, positive=True)
        _num(sched.get("threshold_scale", 1.0),
             "penalty_schedule.threshold_scale", positive=True)
        _num(sched.get("threshold_decay", 0.9),
             "penalty_schedule.threshold_decay", positive=True)
        _num(sched.get("decay_growth", 0.0), "penalty_schedule.decay_growth",
             nonneg=True)
        _int(sched["interval"], "penalty_schedule.interval", minimum=1)
        _int(sched["max_interval"], "penalty_schedule.max_interval",
             minimum=sched["interval"])
        if sched["max_interval"] % sched["interval"]:
            _err("penalty_schedule.max_interval",
                 "must be a multiple of interval")
        _enum(sched.get("on_satisfied", "freeze"),
              "penalty_schedule.on_satisfied", ("freeze", "continue"))
        if pen["kind"] == "none":
            _err("penalty_schedule", "a schedule needs a penalty")

    tr = doc["train"]
    _keys(tr, "train",
          ("N_I", "N", "dt", "M", "lr", "beta1", "beta2", "eps", "clip_norm",
           "lambda", "sigma", "mode", "loss_reduction", "seed", "eval_trials",
           "checkpoint_every", "x0", "x0_halfwidth", "reset_terminal",
           "max_drop_fraction"),
          ("N_I", "N", "dt", "M", "x0", "mode"))
    _int(tr["N_I"], "train.N_I", minimum=0)
    _int(tr["N"], "train.N", minimum=1)
    _num(tr["dt"], "train.dt", positive=True)
    _int(tr["M"], "train.M", minimum=1)
    _num(tr.get("lr", 1e-3), "train.lr", positive=True)
    _num(tr.get("beta1", 0.9), "train.beta1", nonneg=True)
    _num(tr.get("beta2", 0.999), "train.beta2", nonneg=True)
    _num(tr.get("eps", 1e-8), "train.eps", positive=True)
    _num(tr.get("clip_norm"), "train.clip_norm", nullable=True, positive=True)
    _num(tr.get("lambda", 1.0), "train.lambda", nonneg=True)
    _num(tr.get("sigma"), "train.sigma", nullable=True, nonneg=True)
    _enum(tr["mode"], "train.mode", ("continuous", "hybrid"))
    _enum(tr.get("loss_reduction", "sum"), "train.loss_reduction",
          ("sum", "mean"))
    _int(tr.get("seed", 0), "train.seed", minimum=0)
    _int(tr.get("eval_trials", 256), "train.eval_trials", minimum=1)
    _int(tr.get("checkpoint_every", 0), "train.checkpoint_every", minimum=0)
    _vec(tr["x0"], "train.x0", n)
    _vec(tr.get("x0_halfwidth"), "train.x0_halfwidth", n, nonneg=True,
         nullable=True)
    _bool(tr.get("reset_terminal", False), "train.reset_terminal")
    _num(tr.get("max_drop_fraction", 0.5), "train.max_drop_fraction",
         nonneg=True)
    if env != "biped" and (tr["mode"] == "hybrid" or tr.get("reset_terminal")):
        _err("train.mode", "hybrid training needs an environment with a "
                           "reset map (biped)")

    net = doc["network"]
    _keys(net, "network",
          ("lstm_sizes", "v0_mode", "h0_mode", "v0_hidden", "h0_hidden",
           "whiten_center", "whiten_scale", "init_seed"),
          ("lstm_sizes", "whiten_center", "whiten_scale"))
    sizes = net["lstm_sizes"]
    if not isinstance(sizes, list) or not sizes:
        _err("network.lstm_sizes", "expected a non-empty list of layer sizes")
    for i, s in enumerate(sizes):
        _int(s, f"network.lstm_sizes[{i}]", minimum=1)
    _enum(net.get("v0_mode", "scalar"), "network.v0_mode", ("scalar", "mlp"))
    _enum(net.get("h0_mode", "fixed"), "network.h0_mode", ("fixed", "mlp"))
    for key in ("v0_hidden", "h0_hidden"):
        hid = net.get(key, [8])
        if not isinstance(hid, list) or not hid:
            _err(f"network.{key}", "expected a non-empty list of layer sizes")
        for i, s in enumerate(hid):
            _int(s, f"network.{key}[{i}]", minimum=1)
    _vec(net["whiten_center"], "network.whiten_center", n)
    _vec(net["whiten_scale"], "network.whiten_scale", n, positive=True)
    _int(net.get("init_seed", 0), "network.init_seed", minimum=0)
    if tr["mode"] == "hybrid" and net.get("v0_mode", "scalar") != "mlp":
        _err("network.v0_mode", "hybrid training needs v0_mode = mlp")

    ens = doc.get("ensemble")
    if ens is not None:
        _keys(ens, "ensemble",
              ("nominal_states", "n_footsteps", "footstep_steps"),
              ("nominal_states",))
        noms = ens["nominal_states"]
        if not isinstance(noms, list) or not noms:
            _err("ensemble.nominal_states", "expected a non-empty list")
        for i, s in enumerate(noms):
            _vec(s, f"ensemble.nominal_states[{i}]", n)
        _int(ens.get("n_footsteps", 3), "ensemble.n_footsteps", minimum=1)
        _int(ens.get("footstep_steps", tr["N"]), "ensemble.footstep_steps",
             minimum=1)
        if tr["mode"] != "hybrid":
            _err("ensemble", "ensemble training needs train.mode = hybrid")


def _fill_defaults(doc: dict) -> dict:
    """Materialize every optional field so the result is fully explicit."""
    out = copy.deepcopy(doc)
    out.setdefault("constraint", None)
    out.setdefault("penalty_schedule", None)
    out.setdefault("ensemble", None)
    out["cost"].setdefault("terminal_penalty", False)
    p = out["penalty"]
    p.setdefault("max_value", 5.0)
    p.setdefault("steepness", 1.0)
    p.setdefault("slope", 1.0)
    if out["penalty_schedule"] is not None:
        s = out["penalty_schedule"]
        s.setdefault("step_change", 0.0)
        s.setdefault("threshold", None)
        s.setdefault("threshold_scale", 1.0)
        s.setdefault("threshold_decay", 0.9)
        s.setdefault("decay_growth", 0.0)
        s.setdefault("on_satisfied", "freeze")
    for k, v in _TRAIN_DEFAULTS.items():
        out["train"].setdefault(k, copy.deepcopy(v))
    for k, v in _NETWORK_DEFAULTS.items():
        out["network"].setdefault(k, copy.deepcopy(v))
    if out["ensemble"] is not None:
        out["ensemble"].setdefault("n_footsteps", 3)
        out["ensemble"].setdefault("footstep_steps", out["train"]["N"])
    return out


def resolve(doc: dict, sets: tuple[str, ...] = ()) -> dict:
    """Preset overlay + overrides + strict validation -> resolved config."""
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a JSON object")
    env = doc.get("environment")
    if env is None:
        raise ConfigError("environment: missing required key")
    merged = _deep_merge(preset(env), doc, "")
    for assignment in sets:
        apply_set(merged, assignment)
    merged = _fill_defaults(merged)
    _validate(merged)
    return merged


def load_config(path: str, sets: tuple[str, ...] = ()) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: {path} is not valid JSON: {e}") from e
    return resolve(doc, sets)


def dump_config(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- builders

def build_model(cfg: dict):
    d = cfg["dynamics"]
    env = cfg["environment"]
    if env == "cartpole":
        return CartPoleModel(d["cart_mass"], d["pole_mass"], d["pole_length"],
                             d["gravity"], noise_scale=d["sigma"])
    if env == "biped":
        params = BipedParams(d["masses"], d["inertias"], d["lengths"],
                             d["com_offsets"], d["gravity"])
        return BipedModel(params, noise_scale=d["sigma"])
    return DoubleIntegratorModel(noise_scale=d["sigma"])


def build_costs(cfg: dict) -> CostSpec:
    c = cfg["cost"]
    return CostSpec(Q=c["Q"], Q_terminal=c["Q_terminal"], R=c["R"],
                    target=c["target"], u_max=c["u_max"],
                    terminal_penalty=c["terminal_penalty"])


def build_constraint(cfg: dict) -> ConstraintSpec | None:
    con = cfg["constraint"]
    if con is None:
        return None
    lower = [-np.inf if v is None else float(v) for v in con["lower"]]
    upper = [np.inf if v is None else float(v) for v in con["upper"]]
    return ConstraintSpec(con["C"], lower, upper)


def build_penalty(cfg: dict) -> PenaltySpec | None:
    p = cfg["penalty"]
    if p["kind"] == "none":
        return None
    return PenaltySpec(p["kind"], build_constraint(cfg),
                       max_value=p["max_value"], steepness=p["steepness"],
                       slope=p["slope"])


def build_schedule(cfg: dict) -> ScheduleState | None:
    s = cfg["penalty_schedule"]
    if s is None:
        return None
    return ScheduleState(
        steepness=cfg["penalty"]["steepness"],
        steepness_step=s["steepness_step"], step_change=s["step_change"],
        threshold=s["threshold"], threshold_scale=s["threshold_scale"],
        threshold_decay=s["threshold_decay"], decay_growth=s["decay_growth"],
        interval=s["interval"], max_interval=s["max_interval"],
        on_satisfied=s["on_satisfied"])


def build_net(cfg: dict, rng: np.random.Generator | None = None) -> ValueNet:
    n = cfg["network"]
    if rng is None:
        rng = np.random.default_rng(n["init_seed"])
    return ValueNet(_STATE_DIM[cfg["environment"]], tuple(n["lstm_sizes"]),
                    rng,
                    whiten_center=n["whiten_center"],
                    whiten_scale=n["whiten_scale"],
                    v0_mode=n["v0_mode"], h0_mode=n["h0_mode"],
                    v0_hidden=tuple(n["v0_hidden"]),
                    h0_hidden=tuple(n["h0_hidden"]))


def build_train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        iterations=t["N_I"], n_steps=t["N"], dt=t["dt"], x0=t["x0"],
        batch_size=t["M"], lr=t["lr"], beta1=t["beta1"], beta2=t["beta2"],
        eps=t["eps"], clip_norm=t["clip_norm"], sigma=t["sigma"],
        mode="hybrid" if t["mode"] == "hybrid" else "terminal",
        lam=t["lambda"], loss_reduction=t["loss_reduction"], seed=t["seed"],
        x0_halfwidth=t["x0_halfwidth"], reset_terminal=t["reset_terminal"],
        checkpoint_every=t["checkpoint_every"],
        max_drop_fraction=t["max_drop_fraction"])
