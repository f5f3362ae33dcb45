"""Artifact emission: trajectory and metric CSVs, text summaries, gnuplot scripts.

Every file goes through :func:`atomic_write` (temp file in the target
directory, then ``os.replace``) so an interrupted run never leaves a
truncated file behind.  Numbers are printed with ``%.17g``, which round-trips
doubles exactly and keeps reruns byte-identical.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .sim import Metrics, Scenario, Trajectory

FLOAT_FMT = "%.17g"
# per-pair output errors get their own file only up to this many pairs
MAX_PAIR_COLUMNS = 400


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header: list[str], rows: np.ndarray) -> str:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    lines = [",".join(header)]
    fmt = ",".join([FLOAT_FMT] * rows.shape[1])
    lines.extend(fmt % tuple(r) for r in rows)
    return "\n".join(lines) + "\n"


def trajectory_table(traj: Trajectory, s: Scenario) -> tuple[list[str], np.ndarray]:
    """Columns ``t, x_1..x_n`` then per node ``xhat_i_1..n, gamma_i, u_i_1..p_i`` (1-based)."""
    n, N = s.plant.n, s.graph.n_nodes
    pdims = s.plant.input_dims
    header = ["t"] + [f"x_{h}" for h in range(1, n + 1)]
    blocks = [traj.times[:, None], traj.plant_states]
    off = 0
    for i in range(N):
        header += [f"xhat_{i + 1}_{h}" for h in range(1, n + 1)]
        header.append(f"gamma_{i + 1}")
        header += [f"u_{i + 1}_{k}" for k in range(1, pdims[i] + 1)]
        blocks += [traj.x_hats[:, i, :], traj.gammas[:, i:i + 1], traj.inputs[:, off:off + pdims[i]]]
        off += pdims[i]
    return header, np.hstack(blocks)


def metrics_table(m: Metrics) -> tuple[list[str], np.ndarray]:
    N = m.est_error.shape[1]
    header = ["t", "state_norm", "avg_est_error"]
    header += [f"est_err_{i}" for i in range(1, N + 1)]
    header += [f"yerr_max_{i}" for i in range(1, N + 1)]
    rows = np.hstack([m.times[:, None], m.state_norm[:, None], m.avg_est_error[:, None], m.est_error,
                      m.output_err.max(axis=2)])
    return header, rows


def output_error_table(m: Metrics) -> tuple[list[str], np.ndarray]:
    N = m.output_err.shape[1]
    header = ["t"] + [f"yerr_{i}_{j}" for i in range(1, N + 1) for j in range(1, N + 1)]
    return header, np.hstack([m.times[:, None], m.output_err.reshape(len(m.times), -1)])


def summary_text(name: str, s: Scenario, traj: Trajectory, m: Metrics, extra: dict | None = None) -> str:
    t_end = traj.times[-1]
    lines = [
        f"scenario: {name}",
        f"mode: {s.params.mode.value}",
        f"nodes: {s.graph.n_nodes}  states: {s.plant.n}  edges: {len(s.graph.edges())}",
        f"integrator: {s.integrator.method}  dt={s.integrator.dt:g}  t_final={t_end:g}",
        f"final |x|_2: {m.state_norm[-1]:.6e}",
        f"final max_i |xhat_i - x|_2: {m.est_error[-1].max():.6e}",
        f"final e_a: {m.avg_est_error[-1]:.6e}",
        f"final max_ij |yhat_ij - y_j|_2: {m.output_err[-1].max():.6e}",
        f"trailing-10% sup |x|_2^2: {m.residual_bound:.6e}",
        f"adaptive gains at t_final: min {m.gain_final.min():.6f}  max {m.gain_final.max():.6f}  "
        f"mean {m.gain_final.mean():.6f}",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {v}")
    return "\n".join(lines) + "\n"


def gnuplot_script(name: str, s: Scenario, traj_csv: str = "trajectory.csv",
                   metrics_csv: str = "metrics.csv", png_prefix: str = "") -> str:
    """Standalone gnuplot script rendering the standard figures as PNGs."""
    n, N = s.plant.n, s.graph.n_nodes
    pdims = s.plant.input_dims
    gamma_col = [2 + n + sum(n + 1 + pdims[k] for k in range(i)) + n for i in range(N)]
    xhat_col = [2 + n + sum(n + 1 + pdims[k] for k in range(i)) for i in range(N)]
    out = [
        f"# plots for {name}; run with: gnuplot {png_prefix}plots.gp",
        "set datafile separator ','",
        "set key autotitle columnhead outside right",
        "set grid",
        "set terminal pngcairo size 1000,600",
        "",
        f"set output '{png_prefix}state.png'",
        "set title 'plant state'",
        "set xlabel 't'",
        "plot " + ", ".join(f"'{traj_csv}' using 1:{h + 1} with lines" for h in range(1, n + 1)),
        "",
        f"set output '{png_prefix}gains.png'",
        "set title 'adaptive coupling gains'",
        "plot " + ", ".join(f"'{traj_csv}' using 1:{c} with lines" for c in gamma_col),
        "",
        f"set output '{png_prefix}estimation_error.png'",
        "set title 'average estimation error'",
        "set logscale y",
        f"plot '{metrics_csv}' using 1:3 with lines",
        "unset logscale y",
        "",
    ]
    if n >= 2:
        out += [
            f"set output '{png_prefix}plane.png'",
            "set title 'first two state components'",
            "set xlabel 'x_1'",
            "set ylabel 'x_2'",
            f"plot '{traj_csv}' using 2:3 with lines title 'plant', "
            + ", ".join(f"'{traj_csv}' using {c}:{c + 1} with lines title 'node {i + 1}'"
                        for i, c in enumerate(xhat_col[:min(N, 6)])),
            "",
        ]
    # one node's estimates of a few components against the truth
    node = N // 2
    comps = sorted({1, max(1, n // 2), n})
    out += [
        f"set output '{png_prefix}estimates.png'",
        f"set title 'estimates held by node {node + 1}'",
        "set xlabel 't'",
        "unset ylabel",
        "plot " + ", ".join(
            [f"'{traj_csv}' using 1:{h + 1} with lines title 'x_{h}'" for h in comps]
            + [f"'{traj_csv}' using 1:{xhat_col[node] + h - 1} with lines dt 2 title 'xhat_{node + 1}_{h}'"
               for h in comps]),
        "",
    ]
    return "\n".join(out)


def write_run(out_dir, name: str, s: Scenario, traj: Trajectory, m: Metrics, formats=("csv", "gnuplot"),
              extra: dict | None = None, prefix: str = "") -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    if "csv" in formats:
        h, rows = trajectory_table(traj, s)
        written.append(atomic_write(out_dir / f"{prefix}trajectory.csv", csv_text(h, rows)))
        h, rows = metrics_table(m)
        written.append(atomic_write(out_dir / f"{prefix}metrics.csv", csv_text(h, rows)))
        if s.graph.n_nodes ** 2 <= MAX_PAIR_COLUMNS:
            h, rows = output_error_table(m)
            written.append(atomic_write(out_dir / f"{prefix}output_errors.csv", csv_text(h, rows)))
    written.append(atomic_write(out_dir / f"{prefix}summary.txt", summary_text(name, s, traj, m, extra)))
    if "gnuplot" in formats:
        written.append(atomic_write(out_dir / f"{prefix}plots.gp",
                                    gnuplot_script(name, s, f"{prefix}trajectory.csv", f"{prefix}metrics.csv",
                                                   prefix)))
    return written


def matrices_text(gains, plant, report: dict) -> str:
    """Human-readable dump of a gain set and its feasibility report."""
    def fmt(m):
        m = np.atleast_2d(m)
        if m.size == 0:
            return "  (empty)"
        return "\n".join("  " + " ".join(FLOAT_FMT % v for v in row) for row in m)

    parts = []
    for i, (k, f) in enumerate(zip(gains.controller_gains, gains.estimator_gains), start=1):
        parts.append(f"K_{i} ({k.shape[0]}x{k.shape[1]}):\n{fmt(k)}")
        parts.append(f"F_{i} ({f.shape[0]}x{f.shape[1]}):\n{fmt(f)}")
    for label, m in (("T1", gains.T1), ("T2", gains.T2), ("P1", gains.P1), ("Q1", gains.Q1)):
        if m is not None:
            parts.append(f"{label}:\n{fmt(m)}")
    if gains.kappa1 is not None:
        parts.append(f"kappa1: {FLOAT_FMT % gains.kappa1}")
    parts.append("feasibility:")
    for k, v in report.items():
        parts.append(f"  {k}: {FLOAT_FMT % v}")
    return "\n".join(parts) + "\n"
