"""Plot-ready CSV and JSON artifact writers.

All files use '.' decimals, '\n' line endings, and a fixed column order
regardless of locale; floats are written with repr (shortest round-trip), so
reading a file back reproduces the values bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .engine import RolloutBatch
from .ensemble import WalkTrace
from .penalties import ConstraintSpec, PenaltySpec, penalty, violations

__all__ = ["write_trajectories", "write_metrics", "write_penalty_plot",
           "write_walk"]


def _cell(v) -> str:
    f = float(v)
    if math.isnan(f):
        return "nan"
    return repr(f)


def _writer(f):
    return csv.writer(f, lineterminator="\n")


def write_trajectories(path: str, batch: RolloutBatch,
                       constraint: ConstraintSpec | None = None,
                       pen: PenaltySpec | None = None) -> int:
    """One row per (trial, step): trial, step, t, state, control, y,
    running_cost, penalty, violation_flag.

    The terminal step has no control or running cost (written as nan). The
    violation flag is recomputed from the state columns and the constraint
    bounds, so a reader can verify it offline; without a constraint it is 0.
    Returns the number of data rows written.
    """
    x, y, u, rc = batch.x, batch.y, batch.u, batch.run_cost
    M, steps, n = x.shape
    m = u.shape[2]
    header = (["trial", "step", "t"]
              + [f"x{i}" for i in range(n)]
              + [f"u{i}" for i in range(m)]
              + ["y", "running_cost", "penalty", "violation_flag"])
    if pen is not None:
        pvals = np.asarray(penalty(x.reshape(M * steps, n), pen),
                           float).reshape(M, steps)
    else:
        pvals = np.zeros((M, steps))
    if constraint is not None:
        vflag = violations(x.reshape(M * steps, n),
                           constraint).reshape(M, steps).astype(int)
    else:
        vflag = np.zeros((M, steps), dtype=int)
    rows = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = _writer(f)
        w.writerow(header)
        for trial in range(M):
            for k in range(steps):
                has_u = k < steps - 1
                row = [str(trial), str(k), _cell(k * batch.dt)]
                row += [_cell(v) for v in x[trial, k]]
                row += [_cell(u[trial, k, j]) if has_u else "nan"
                        for j in range(m)]
                row.append(_cell(y[trial, k]))
                row.append(_cell(rc[trial, k]) if has_u else "nan")
                row.append(_cell(pvals[trial, k]))
                row.append(str(int(vflag[trial, k])))
                w.writerow(row)
                rows += 1
    return rows


def write_metrics(path: str, metrics: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(metrics, f, indent=2, sort_keys=True)
        f.write("\n")


def write_penalty_plot(path: str, xs: np.ndarray,
                       curves: dict[str, np.ndarray]) -> None:
    """Columns: x, then one penalty curve per label (insertion order)."""
    xs = np.asarray(xs, float).reshape(-1)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = _writer(f)
        w.writerow(["x"] + list(curves))
        cols = [np.asarray(c, float).reshape(-1) for c in curves.values()]
        for i, xv in enumerate(xs):
            w.writerow([_cell(xv)] + [_cell(c[i]) for c in cols])


def write_walk(path: str, trace: WalkTrace) -> int:
    """One row per walk sample: t, footstep, member_id, state, control,
    knee angle (q4 - q5). Footstep boundaries repeat t (the reset is
    instantaneous); controls are nan on each footstep's final row."""
    t, x, u, ids = trace.flat()
    n, m = x.shape[1], u.shape[1]
    step_of = np.concatenate([np.full(s.shape[0], i, dtype=int)
                              for i, s in enumerate(trace.states)])
    header = (["t", "footstep", "member_id"]
              + [f"x{i}" for i in range(n)]
              + [f"u{i}" for i in range(m)]
              + ["knee"])
    rows = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = _writer(f)
        w.writerow(header)
        for i in range(t.size):
            row = [_cell(t[i]), str(int(step_of[i])), str(int(ids[i]))]
            row += [_cell(v) for v in x[i]]
            row += [_cell(v) for v in u[i]]
            row.append(_cell(x[i, 3] - x[i, 4]))
            w.writerow(row)
            rows += 1
    return rows
