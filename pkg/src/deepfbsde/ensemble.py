"""Controller ensembles for multi-footstep walking.

One trained controller handles initial states near one nominal state; a walk
chains footsteps by picking, before each footstep, the member whose nominal
state is closest to the current state (whitened Euclidean distance, ties to
the lowest id), rolling that member's controller for the footstep horizon,
and applying the heel-strike map to start the next footstep. Selection
re-runs every footstep, so consecutive footsteps may use different members.

Members train independently (`train_ensemble`), each in hybrid mode with
initial states sampled uniformly from a box around its nominal state, and
are persisted as one checkpoint per member plus a manifest JSON that
`load_ensemble` restores exactly.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import load_checkpoint, read_manifest
from .costs import CostSpec
from .dynamics.base import SdeModel
from .engine import ValueNet, rollout
from .errors import ConfigError, UsageError
from .penalties import PenaltySpec, ScheduleState
from .training import TrainConfig, stream, train

__all__ = ["EnsembleMember", "WalkTrace", "select_controller",
           "multi_step_rollout", "train_ensemble", "save_manifest",
           "load_ensemble"]

MANIFEST_NAME = "ensemble.json"


@dataclass
class EnsembleMember:
    """One trained controller and the nominal initial state it is built for."""

    id: int
    nominal_state: np.ndarray
    net: ValueNet

    def __post_init__(self):
        self.nominal_state = np.asarray(self.nominal_state, float).reshape(-1)
        if not np.all(np.isfinite(self.nominal_state)):
            raise ConfigError("nominal_state must be finite")


def member_distance(member: EnsembleMember, x0: np.ndarray) -> float:
    """Whitened Euclidean distance from x0 to the member's nominal state."""
    d = (np.asarray(x0, float).reshape(-1) - member.nominal_state)
    return float(np.linalg.norm(d / member.net.whiten_scale))


def select_controller(members: list[EnsembleMember], x0) -> EnsembleMember:
    """Member with the nominal state closest to x0; ties go to the lowest id."""
    if not members:
        raise UsageError("cannot select from an empty ensemble")
    best = None
    best_d = np.inf
    for m in sorted(members, key=lambda m: m.id):
        d = member_distance(m, x0)
        if d < best_d:
            best, best_d = m, d
    return best


@dataclass
class WalkTrace:
    """Multi-footstep walk record.

    states[s] is footstep s's pre-impact path ((N_s+1, n), first row is the
    footstep's start state); post_states[s] = heel_strike(states[s][-1]) and
    equals states[s+1][0] exactly. A diverged footstep is truncated at the
    last finite state, flagged failed, and ends the walk (no heel strike).
    """

    dt: float
    member_ids: list[int] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    post_states: list[np.ndarray] = field(default_factory=list)
    controls: list[np.ndarray] = field(default_factory=list)
    failed: bool = False
    fail_footstep: int = -1

    @property
    def n_footsteps(self) -> int:
        return len(self.states)

    @property
    def knee_angles(self) -> np.ndarray:
        """q4 - q5 (swing knee) over the whole walk, footsteps concatenated."""
        if not self.states:
            return np.empty((0,))
        return np.concatenate([s[:, 3] - s[:, 4] for s in self.states])

    def flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(t, x, u, member_id) rows across footsteps, for export.

        Controls are padded with nan on each footstep's terminal row.
        """
        ts, xs, us, ids = [], [], [], []
        t0 = 0.0
        for s, x in enumerate(self.states):
            k = x.shape[0]
            ts.append(t0 + self.dt * np.arange(k))
            xs.append(x)
            u = np.full((k, self.controls[s].shape[1]), np.nan)
            u[:self.controls[s].shape[0]] = self.controls[s]
            us.append(u)
            ids.append(np.full(k, self.member_ids[s], dtype=int))
            t0 += self.dt * (k - 1)
        return (np.concatenate(ts), np.concatenate(xs), np.concatenate(us),
                np.concatenate(ids))


def multi_step_rollout(members: list[EnsembleMember], model: SdeModel,
                       costs: CostSpec, x0, n_footsteps: int, n_steps: int,
                       dt: float, *, sigma: float | None = None,
                       noise: np.ndarray | None = None, seed: int = 0
                       ) -> WalkTrace:
    """Walk n_footsteps footsteps of n_steps integration steps each.

    noise, if given, must have shape (n_footsteps, n_steps, m); otherwise it
    is drawn from the evaluation stream for `seed` (pass sigma=0.0 for a
    deterministic walk). The penalty never enters here: it shapes training,
    not the deployed dynamics.
    """
    if noise is None:
        noise = stream(seed, 7).normal(
            0.0, np.sqrt(dt), (n_footsteps, n_steps, model.m))
    noise = np.asarray(noise, float)
    if noise.shape != (n_footsteps, n_steps, model.m):
        raise UsageError("noise must have shape (n_footsteps, n_steps, m)")

    trace = WalkTrace(dt=float(dt))
    x = np.asarray(x0, float).reshape(-1)
    for s in range(n_footsteps):
        member = select_controller(members, x)
        batch = rollout(member.net, model, costs, None, x[None, :],
                        noise[s][None], dt, sigma=sigma)
        path = batch.x[0]
        u = batch.u[0]
        trace.member_ids.append(member.id)
        if batch.dropped:
            ds = int(batch.death_step[0])
            trace.states.append(path[:ds])
            trace.controls.append(u[:ds])
            trace.failed = True
            trace.fail_footstep = s
            return trace
        trace.states.append(path)
        trace.controls.append(u)
        x = np.asarray(model.heel_strike(path[-1]), float).reshape(-1)
        trace.post_states.append(x)
    return trace


def train_ensemble(cfg: TrainConfig, model: SdeModel, costs: CostSpec,
                   nominal_states, net_factory, *, pen_factory=None,
                   sched_factory=None, out_dir: str | None = None
                   ) -> tuple[list[EnsembleMember], list[list[dict]]]:
    """Train one hybrid-mode controller per nominal state.

    cfg is the per-member template; member i trains on cfg with x0 replaced
    by nominal i and the seed offset by i so members see independent noise.
    net_factory(rng) builds a fresh untrained ValueNet; pen_factory and
    sched_factory (both optional) build a fresh penalty and schedule per
    member, since both are mutated during training. With out_dir set, each
    member writes its log and checkpoints under member_<id>/ and the
    manifest is rewritten after every member that finishes, so an aborted
    build keeps the completed members on disk.
    """
    nominal_states = [np.asarray(s, float).reshape(-1) for s in nominal_states]
    if not nominal_states:
        raise ConfigError("need at least one nominal state")
    if cfg.mode != "hybrid":
        raise ConfigError("ensemble members must train in hybrid mode")

    members: list[EnsembleMember] = []
    logs: list[list[dict]] = []
    for i, nominal in enumerate(nominal_states):
        cfg_i = dataclasses.replace(cfg, x0=nominal, seed=cfg.seed + i)
        net = net_factory(stream(cfg.seed, 16 + i))
        pen = pen_factory() if pen_factory is not None else None
        sched = sched_factory() if sched_factory is not None else None
        member_dir = None
        if out_dir is not None:
            member_dir = os.path.join(out_dir, f"member_{i:02d}")
        log = train(cfg_i, model, costs, net, pen, sched, out_dir=member_dir)
        members.append(EnsembleMember(id=i, nominal_state=nominal, net=net))
        logs.append(log)
        if out_dir is not None:
            save_manifest(os.path.join(out_dir, MANIFEST_NAME), members,
                          dt=cfg.dt, n_steps=cfg.n_steps)
    return members, logs


def save_manifest(path: str, members: list[EnsembleMember], *, dt: float,
                  n_steps: int) -> None:
    doc = {
        "dt": float(dt),
        "n_steps": int(n_steps),
        "members": [
            {
                "id": m.id,
                "nominal_state": m.nominal_state.tolist(),
                "checkpoint": os.path.join(f"member_{m.id:02d}",
                                           "checkpoint_final.bin"),
            }
            for m in members
        ],
    }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
    os.replace(tmp, path)


def load_ensemble(manifest_path: str) -> tuple[list[EnsembleMember], dict]:
    """Rebuild all members from a manifest; returns (members, manifest)."""
    with open(manifest_path, encoding="utf-8") as f:
        doc = json.load(f)
    base = os.path.dirname(os.path.abspath(manifest_path))
    members = []
    for entry in doc["members"]:
        ckpt = os.path.join(base, entry["checkpoint"])
        meta = read_manifest(ckpt)["meta"]
        net = ValueNet.from_meta(meta)
        load_checkpoint(ckpt, net.parameters())
        members.append(EnsembleMember(id=int(entry["id"]),
                                      nominal_state=entry["nominal_state"],
                                      net=net))
    return members, doc
