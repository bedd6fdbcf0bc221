"""Command-line interface.

Subcommands: train, eval, walk, penalty-plot, gradcheck, export-config.
Exit codes: 0 ok, 1 gradcheck tolerance failure, 2 configuration/usage
error, 3 training abort, 4 checkpoint error.

Output directory precedence: --out flag, then the DEEPFBSDE_OUTPUT_DIR
environment variable, then the config's output_dir. Every run writes its
resolved config snapshot (config_resolved.json); re-running `train` on that
snapshot with the same seed reproduces the training log bit for bit.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from .autodiff import backend_name
from .checkpoint import load_checkpoint, read_manifest
from .csvio import (write_metrics, write_penalty_plot, write_trajectories,
                    write_walk)
from .engine import ValueNet
from .ensemble import (MANIFEST_NAME, load_ensemble, multi_step_rollout,
                       train_ensemble)
from .errors import (CheckpointError, ConfigError, DeepFbsdeError,
                     TrainingAbort, UsageError)
from .gradcheck import SUITES, TOLERANCE, run_gradcheck
from .penalties import ConstraintSpec, PenaltySpec, penalty
from .training import evaluate, measure_latency, train

__all__ = ["main"]


def _out_dir(cfg: dict, args) -> str:
    if getattr(args, "out", None):
        return args.out
    env = os.environ.get("DEEPFBSDE_OUTPUT_DIR")
    if env:
        return env
    return cfg["output_dir"]


def _load(args) -> dict:
    return cfgmod.load_config(args.config, tuple(args.set or ()))


def _write_resolved(cfg: dict, out: str) -> None:
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config_resolved.json"), "w",
              encoding="utf-8") as f:
        f.write(cfgmod.dump_config(cfg))


def cmd_train(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg, args)
    _write_resolved(cfg, out)
    model = cfgmod.build_model(cfg)
    costs = cfgmod.build_costs(cfg)
    tc = cfgmod.build_train_config(cfg)
    if cfg["ensemble"] is not None:
        members, logs = train_ensemble(
            tc, model, costs, cfg["ensemble"]["nominal_states"],
            lambda rng: cfgmod.build_net(cfg, rng),
            pen_factory=lambda: cfgmod.build_penalty(cfg),
            sched_factory=lambda: cfgmod.build_schedule(cfg),
            out_dir=out)
        total = sum(len(log) for log in logs)
        print(f"trained {len(members)} ensemble members "
              f"({total} iterations total) -> {out}/{MANIFEST_NAME}")
        return 0
    net = cfgmod.build_net(cfg)
    pen = cfgmod.build_penalty(cfg)
    sched = cfgmod.build_schedule(cfg)
    log = train(tc, model, costs, net, pen, sched,
                constraint=cfgmod.build_constraint(cfg), out_dir=out)
    if log:
        last = log[-1]
        print(f"{len(log)} iterations, final loss {last['loss']:.6g}, "
              f"episode cost {last['mean_episode_cost']:.6g}, "
              f"k {last['k']:.3g} -> {out}/checkpoint_final.bin")
    else:
        print(f"0 iterations requested; wrote untrained checkpoint -> "
              f"{out}/checkpoint_final.bin")
    return 0


def _load_net(checkpoint: str, n_expected: int) -> ValueNet:
    meta = read_manifest(checkpoint)["meta"]
    if "n" not in meta:
        raise CheckpointError(
            f"{checkpoint}: meta lacks the network description")
    if int(meta["n"]) != n_expected:
        raise ConfigError(
            f"checkpoint state dimension {meta['n']} does not match the "
            f"configured environment ({n_expected})")
    net = ValueNet.from_meta(meta)
    load_checkpoint(checkpoint, net.parameters())
    return net


def cmd_eval(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg, args)
    os.makedirs(out, exist_ok=True)
    model = cfgmod.build_model(cfg)
    costs = cfgmod.build_costs(cfg)
    net = _load_net(args.checkpoint, model.n)
    tr = cfg["train"]
    trials = args.trials if args.trials is not None else tr["eval_trials"]
    sigma = args.sigma if args.sigma is not None else tr["sigma"]
    metrics, batch = evaluate(
        net, model, costs, trials=trials, n_steps=tr["N"], dt=tr["dt"],
        x0=tr["x0"], sigma=sigma, constraint=cfgmod.build_constraint(cfg),
        seed=args.seed, reset_terminal=tr["reset_terminal"])
    doc = metrics.to_dict()
    if args.latency:
        doc["latency"] = measure_latency(net, model, costs, tr["x0"],
                                         n_calls=args.latency,
                                         n_steps=tr["N"])
    write_metrics(os.path.join(out, "metrics.json"), doc)
    rows = write_trajectories(os.path.join(out, "trajectories.csv"), batch,
                              constraint=cfgmod.build_constraint(cfg),
                              pen=cfgmod.build_penalty(cfg))
    print(f"{trials} trials: episode cost "
          f"{metrics.episode_cost_mean:.6g} +- {metrics.episode_cost_std:.3g}, "
          f"violation rate {metrics.violation_rate:.4f}, "
          f"diverged {metrics.diverged}; {rows} rows -> {out}")
    return 0


def cmd_walk(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg, args)
    os.makedirs(out, exist_ok=True)
    if cfg["ensemble"] is None:
        raise ConfigError("ensemble: walk needs an ensemble section")
    model = cfgmod.build_model(cfg)
    costs = cfgmod.build_costs(cfg)
    manifest = args.manifest or os.path.join(out, MANIFEST_NAME)
    members, _ = load_ensemble(manifest)
    ens = cfg["ensemble"]
    footsteps = args.footsteps or ens["n_footsteps"]
    steps = args.steps or ens["footstep_steps"]
    sigma = 0.0 if args.no_noise else None
    trace = multi_step_rollout(members, model, costs, cfg["train"]["x0"],
                               footsteps, steps, cfg["train"]["dt"],
                               sigma=sigma, seed=args.seed)
    rows = write_walk(os.path.join(out, "walk.csv"), trace)
    knee = trace.knee_angles
    status = (f"failed at footstep {trace.fail_footstep}" if trace.failed
              else "completed")
    print(f"{trace.n_footsteps} footsteps {status}, members "
          f"{trace.member_ids}, min knee angle {knee.min():.4f} rad; "
          f"{rows} rows -> {out}/walk.csv")
    return 1 if trace.failed else 0


def cmd_penalty_plot(args) -> int:
    lo = -np.inf if args.lower is None else args.lower
    hi = np.inf if args.upper is None else args.upper
    con = ConstraintSpec([[1.0]], [lo], [hi])
    xs = np.linspace(args.range[0], args.range[1], args.samples)
    curves = {}
    for k in args.steepness:
        pen = PenaltySpec(args.kind, con, max_value=args.max_value,
                          steepness=k, slope=args.slope)
        curves[f"p_k{k:g}"] = np.asarray(
            penalty(xs[:, None], pen), float).reshape(-1)
    write_penalty_plot(args.out, xs, curves)
    print(f"{args.samples} samples x {len(curves)} curves -> {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(seed=args.seed, subset=args.subset,
                            corrupt=args.corrupt)
    status = 0
    for name, err in results.items():
        ok = err < TOLERANCE
        print(f"gradcheck {name:8s} max rel err {err:.3e} "
              f"{'ok' if ok else 'FAIL'} (tol {TOLERANCE:g})")
        if not ok:
            status = 1
    return status


def cmd_export_config(args) -> int:
    if args.config:
        cfg = _load(args)
    else:
        cfg = cfgmod.resolve({"environment": args.environment},
                             tuple(args.set or ()))
    text = cfgmod.dump_config(cfg)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
        print(f"resolved config -> {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="deepfbsde",
        description="Train and evaluate state-constrained stochastic "
                    "optimal controllers (deep FBSDE solver; "
                    f"{backend_name()} kernel backend).")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="experiment config JSON")
        sp.add_argument("--set", action="append", metavar="PATH=VALUE",
                        help="override a config field (repeatable)")
        sp.add_argument("--out", help="output directory (overrides config "
                                      "and DEEPFBSDE_OUTPUT_DIR)")

    sp = sub.add_parser("train", help="run a training experiment")
    add_common(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a trained checkpoint")
    add_common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sigma", type=float,
                    help="evaluation noise scale (default: training sigma)")
    sp.add_argument("--latency", type=int, nargs="?", const=10000, default=0,
                    metavar="CALLS",
                    help="also measure single-step control latency")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("walk", help="multi-footstep ensemble walk")
    add_common(sp)
    sp.add_argument("--manifest", help="ensemble manifest "
                                       f"(default: <out>/{MANIFEST_NAME})")
    sp.add_argument("--footsteps", type=int)
    sp.add_argument("--steps", type=int, help="integration steps per footstep")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--no-noise", action="store_true")
    sp.set_defaults(fn=cmd_walk)

    sp = sub.add_parser("penalty-plot", help="sample a penalty curve to CSV")
    sp.add_argument("--kind", choices=("logistic", "relu"),
                    default="logistic")
    sp.add_argument("--lower", type=float, default=1.0)
    sp.add_argument("--upper", type=float, default=5.0)
    sp.add_argument("--max-value", type=float, default=5.0)
    sp.add_argument("--slope", type=float, default=1.0)
    sp.add_argument("--steepness", type=float, action="append",
                    help="penalty steepness k (repeatable; default 1 2 5)")
    sp.add_argument("--range", type=float, nargs=2, default=(-3.0, 9.0))
    sp.add_argument("--samples", type=int, default=601)
    sp.add_argument("--out", default="penalty_plot.csv")
    sp.set_defaults(fn=cmd_penalty_plot)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--subset", choices=("all",) + SUITES, default="all")
    sp.add_argument("--corrupt", action="store_true",
                    help=argparse.SUPPRESS)  # negative-control test hook
    sp.set_defaults(fn=cmd_gradcheck)

    sp = sub.add_parser("export-config",
                        help="print or write a resolved config")
    sp.add_argument("--environment", choices=cfgmod.ENVIRONMENTS)
    sp.add_argument("--config")
    sp.add_argument("--set", action="append", metavar="PATH=VALUE")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_export_config)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "export-config" and not (args.environment
                                                or args.config):
        print("export-config: need --environment or --config",
              file=sys.stderr)
        return 2
    if args.command == "penalty-plot" and not args.steepness:
        args.steepness = [1.0, 2.0, 5.0]
    try:
        return args.fn(args)
    except (ConfigError, UsageError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except TrainingAbort as e:
        where = f" (iteration {e.iteration})" if e.iteration is not None else ""
        print(f"training aborted{where}: {e}", file=sys.stderr)
        return 3
    except CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return 4
    except DeepFbsdeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
