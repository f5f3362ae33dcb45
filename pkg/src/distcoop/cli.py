"""Command-line front end: ``distcoop <subcommand> ...``.

Exit codes: 0 success, 1 verification failure, 2 bad configuration or
arguments, 3 divergence, 4 synthesis failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import atomic_write, matrices_text, write_run
from .config import ScenarioConfig, example1, example2
from .errors import ConfigError, DivergenceError, PreconditionError, SynthesisError
from .sim import BaselineParams, extract_metrics, integrate, integrate_baseline
from .synthesis.design import feasibility_report

OUT_ENV = "DISTCOOP_OUT"

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DIVERGED, EXIT_SYNTHESIS = 0, 1, 2, 3, 4

log = logging.getLogger("distcoop")


def _out_dir(args, cfg: ScenarioConfig | None = None) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or (cfg.output_directory if cfg else None)
    if not out:
        raise ConfigError(f"no output directory: pass --out or set {OUT_ENV}")
    return Path(out)


def _simulate(cfg: ScenarioConfig, out: Path, echo) -> dict:
    t0 = time.perf_counter()
    scenario = cfg.build()
    t_syn = time.perf_counter() - t0
    traj = integrate(scenario)
    m = extract_metrics(traj, scenario)
    elapsed = time.perf_counter() - t0
    extra = {"gain certificate": scenario.gains.certificate or "explicit"}
    atomic_write(out / "config.json", cfg.to_json())
    files = write_run(out, cfg.name, scenario, traj, m, cfg.formats, extra)
    echo(f"{cfg.name}: |x(T)| = {m.state_norm[-1]:.3e}, max_i |xhat_i - x| = {m.est_error[-1].max():.3e}, "
         f"e_a(T) = {m.avg_est_error[-1]:.3e}  (synthesis {t_syn:.1f}s, total {elapsed:.1f}s)")
    for f in files:
        echo(f"  wrote {f}")
    return {"scenario": scenario, "trajectory": traj, "metrics": m}


def cmd_simulate(args, echo):
    cfg = ScenarioConfig.load(args.config).with_overrides(dt=args.dt, t_final=args.t_final,
                                                          record_every=args.record_every)
    _simulate(cfg, _out_dir(args, cfg), echo)
    return EXIT_OK


def cmd_design_gains(args, echo):
    cfg = ScenarioConfig.load(args.config)
    gains = cfg.synthesize()
    plant = cfg.parsed.plant
    report = feasibility_report(plant, gains)
    out = _out_dir(args, cfg)
    doc = {"K": [k.tolist() for k in gains.controller_gains], "F": [f.tolist() for f in gains.estimator_gains]}
    atomic_write(out / "gains.json", json.dumps(doc, indent=2) + "\n")
    atomic_write(out / "gains.txt", matrices_text(gains, plant, report))
    lines = [f"certificate: {gains.certificate or 'explicit'}"]
    lines += [f"{k}: {v:.6e}" for k, v in report.items()]
    atomic_write(out / "feasibility.txt", "\n".join(lines) + "\n")
    for line in lines:
        echo(line)
    return EXIT_OK


def cmd_example1(args, echo):
    cfg = example1(noisy=not args.noise_free, t_final=args.t_final, dt=args.dt)
    _simulate(cfg, _out_dir(args), echo)
    return EXIT_OK


def cmd_example2(args, echo):
    cfg = example2(scale=args.scale, full_scale=args.full_scale, seed=args.seed, noisy=args.noisy,
                   t_final=args.t_final, dt=args.dt)
    _simulate(cfg, _out_dir(args), echo)
    return EXIT_OK


def _coupling_matrices(spec: str, n: int, N: int) -> list:
    """``spec`` is a positive number (``P_i = c I``) or a JSON file listing N matrices."""
    try:
        c = float(spec)
    except ValueError:
        path = Path(spec)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"--coupling: cannot read {spec}: {exc}") from None
        if not isinstance(data, list) or len(data) != N:
            raise ConfigError(f"--coupling: {spec} must list {N} matrices")
        mats = [np.array(p, dtype=float) for p in data]
        for i, p in enumerate(mats):
            if p.shape != (n, n):
                raise ConfigError(f"--coupling: matrix {i + 1} has shape {p.shape}, expected ({n}, {n})")
        return mats
    if not c > 0:
        raise ConfigError("--coupling must be positive")
    return [c * np.eye(n) for _ in range(N)]


def cmd_baseline(args, echo):
    if args.gamma < 0:
        raise ConfigError("--gamma must be nonnegative")
    cfg = ScenarioConfig.load(args.config).with_overrides(dt=args.dt, t_final=args.t_final)
    out = _out_dir(args, cfg)
    scenario = cfg.build()
    plant = scenario.plant
    P = _coupling_matrices(args.coupling, plant.n, plant.n_nodes)
    if args.observer_gains:
        data = json.loads(Path(args.observer_gains).read_text())
        F = [np.array(f, dtype=float) for f in data]
    else:
        # the fixed-gain form feeds back +F_i (y_i - C_i xhat_i)
        F = [-f for f in scenario.gains.estimator_gains]
    bp = BaselineParams(float(args.gamma), tuple(P), tuple(F))
    adaptive = _simulate(cfg, out, echo)
    try:
        traj = integrate_baseline(scenario, bp)
    except DivergenceError as exc:
        msg = f"baseline (fixed gamma = {args.gamma:g}) diverged at t = {exc.time:.6g}"
        atomic_write(out / "baseline_summary.txt", msg + "\n")
        echo(msg)
        return EXIT_DIVERGED
    m = extract_metrics(traj, scenario)
    extra = {
        "baseline fixed gamma": f"{args.gamma:g}",
        "adaptive max_i gamma_i(t_final)": f"{adaptive['metrics'].gain_final.max():.6f}",
        "adaptive mean gamma_i(t_final)": f"{adaptive['metrics'].gain_final.mean():.6f}",
        "adaptive final max_i |xhat_i - x|_2": f"{adaptive['metrics'].est_error[-1].max():.6e}",
    }
    write_run(out, f"{cfg.name} (fixed-gain baseline)", scenario, traj, m, cfg.formats, extra, prefix="baseline_")
    echo(f"baseline gamma = {args.gamma:g}: max_i |xhat_i - x|(T) = {m.est_error[-1].max():.3e}; "
         f"adaptive max gamma_i(T) = {adaptive['metrics'].gain_final.max():.4f}")
    return EXIT_OK


def cmd_verify(args, echo):
    from .verify import SUITES, run_all

    names = args.suite or list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suite(s) {unknown}; choose from {list(SUITES)}")
    results = run_all(names, report=lambda r: echo(r.line()))
    failed = [r.name for r in results if not r.passed]
    echo(f"{len(results) - len(failed)}/{len(results)} suites passed" + (f"; failed: {', '.join(failed)}"
                                                                          if failed else ""))
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distcoop", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def out_arg(sp):
        sp.add_argument("--out", help=f"output directory (default: ${OUT_ENV})")

    sp = sub.add_parser("simulate", help="run a scenario from a JSON config")
    sp.add_argument("--config", required=True)
    out_arg(sp)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--t-final", type=float)
    sp.add_argument("--record-every", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("design-gains", help="synthesize K_i, F_i and report feasibility")
    sp.add_argument("--config", required=True)
    out_arg(sp)
    sp.set_defaults(func=cmd_design_gains)

    sp = sub.add_parser("example1", help="six robots carrying one object on a directed ring")
    out_arg(sp)
    sp.add_argument("--noise-free", action="store_true")
    sp.add_argument("--t-final", type=float, default=300.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.set_defaults(func=cmd_example1)

    sp = sub.add_parser("example2", help="sensor network observing a chain of integrators")
    out_arg(sp)
    sp.add_argument("--full-scale", action="store_true", help="100 sensors and states instead of 20")
    sp.add_argument("--scale", type=int, help="custom N = n")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--noisy", action="store_true")
    sp.add_argument("--t-final", type=float, default=200.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.set_defaults(func=cmd_example2)

    sp = sub.add_parser("baseline", help="fixed-gain estimator with user-supplied gamma and P_i")
    sp.add_argument("--config", required=True)
    sp.add_argument("--gamma", type=float, required=True)
    sp.add_argument("--coupling", required=True, help="P_i: a number c (P_i = c I) or a JSON list of matrices")
    sp.add_argument("--observer-gains", help="JSON list of F_i (default: negated designed gains)")
    out_arg(sp)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--t-final", type=float)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("verify", help="run the property and regression suites")
    sp.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    def echo(msg):
        print(msg, flush=True)

    try:
        return args.func(args, echo)
    except (ConfigError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SynthesisError as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_SYNTHESIS
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
