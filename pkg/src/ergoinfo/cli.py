"""Command-line entry point.

Every subcommand writes CSV (and grid) files into ``--out``. Each CSV starts
with a ``# config_hash=... seed=...`` comment line followed by a header row.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .infosim import simulate_collection, write_grid
from .planner import OptimizerError, optimize
from .scenarios import TwoPostSpec, TwoStateSpec
from .spectral import DomainError, FieldFormatError, read_field, write_field
from .trajectory import effort, read_csv, write_csv

log = logging.getLogger("ergoinfo")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def write_table(path: Path, rows: list[dict], cfg_hash: str, seed, fieldnames=None) -> Path:
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg_hash} seed={seed}\n")
    w = csv.DictWriter(buf, fieldnames=fieldnames or list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(v) for k, v in row.items()})
    path.write_text(buf.getvalue())
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _config(args) -> ex.ExperimentConfig:
    return ex.load_config(args.config, seed=args.seed, K=args.k, N=args.n, output_dir=args.out)


def _outdir(cfg) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_score_sweep(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    rows, trajs = ex.score_sweep(cfg)
    path = write_table(out / "score_sweep.csv", rows, cfg.digest(), cfg.seed)
    for i, t in enumerate(cfg.score_targets):
        if t in trajs:
            write_csv(trajs[t], out / f"sweep_traj_{i}.csv")
    write_csv(trajs["greedy"], out / "greedy_traj.csv")
    for r in rows:
        log.info("%-6s target=%-8s score=%-10s info=%s", r["method"], r["score_target"],
                 _short(r["achieved_score"]), _short(r["info_collected_pct"]))
    print(path)
    return EXIT_OK


def cmd_horizon(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    rows, plans = ex.horizon_experiment(cfg)
    path = write_table(out / "horizon.csv", rows, cfg.digest(), cfg.seed)
    for name, traj in plans.items():
        write_csv(traj, out / f"horizon_{name}.csv")
    print(path)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    field = read_field(args.field)
    traj = read_csv(args.trajectory, cfg.dt, field.domain)
    rows, fields = ex.reconstruction_errors(traj, field.resolution, args.k_list)
    for k, f in fields.items():
        write_field(f, out / f"reconstruct_K{k}.grid")
    print(write_table(out / "reconstruct_error.csv", rows, cfg.digest(), cfg.seed))
    return EXIT_OK


def cmd_residual(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    phi = read_field(args.field)
    traj = read_csv(args.trajectory, cfg.dt, phi.domain)
    residual, flagged, _ = ex.split_residual(phi, traj, args.split, cfg.K)
    write_field(residual, out / "residual.grid")
    centers = residual.cell_centers()
    rows = [{"i": i, "j": j, "x": float(centers[0][i]), "y": float(centers[1][j]),
             "residual": float(residual.values[i, j])} for i, j in flagged]
    print(write_table(out / "oversampled.csv", rows, cfg.digest(), cfg.seed,
                      fieldnames=["i", "j", "x", "y", "residual"]))
    return EXIT_OK


def cmd_scenarios(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    state_rows, post_rows = ex.scenario_tables(TwoStateSpec(), TwoPostSpec())
    write_table(out / "scenarios_two_state.csv", state_rows, cfg.digest(), cfg.seed)
    print(write_table(out / "scenarios_two_post.csv", post_rows, cfg.digest(), cfg.seed))
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    opt = cfg.optimizer_config
    if args.score_target is not None:
        opt = replace(opt, score_target=args.score_target)
    report = optimize(cfg.start, cfg.N, cfg.dt, cfg.phi(), opt)
    write_csv(report.trajectory, out / "trajectory.csv")
    rows = [{"iteration": i, "score": s, "objective": o, "effort": e} for i, s, o, e in report.rows()]
    write_table(out / "optimize_report.csv", rows, cfg.digest(), cfg.seed)
    log.info("terminated by %s after %d iterations, score %.4g, effort %.4g",
             report.terminated_by, report.iterations, report.score, effort(report.trajectory))
    print(out / "trajectory.csv")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    grid = cfg.info_grid()
    traj = read_csv(args.trajectory, cfg.dt, cfg.domain)
    sim = simulate_collection(grid, traj)
    rows = []
    for n, (x, cell, got) in enumerate(zip(traj.points, sim.cells, sim.per_step), start=1):
        rows.append({"n": n, "x": float(x[0]), "y": float(x[1]),
                     "cell_i": "" if cell is None else cell[0], "cell_j": "" if cell is None else cell[1],
                     "collected": float(got)})
    write_table(out / "simulate.csv", rows, cfg.digest(), cfg.seed)
    write_grid(sim.grid, out / "remaining.grid")
    print(f"collected {100.0 * sim.collected / grid.initial_total:.2f}% of the information")
    return EXIT_OK


def cmd_eid(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    write_field(cfg.phi(), out / "eid.grid")
    write_grid(cfg.info_grid(), out / "info.grid")
    print(out / "eid.grid")
    return EXIT_OK


def _short(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--k", type=int, help="override the per-axis coefficient order K")
    common.add_argument("--n", type=int, help="override the trajectory length N")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ergoinfo", description="Ergodic trajectories and linear information decay.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score-sweep", parents=[common], help="info collected vs ergodic score")
    p.set_defaults(func=cmd_score_sweep)
    p = sub.add_parser("horizon", parents=[common], help="single vs composite horizon")
    p.set_defaults(func=cmd_horizon)
    p = sub.add_parser("reconstruct", parents=[common], help="band-limited trajectory reconstructions")
    p.add_argument("field", type=Path, help="grid file fixing domain and resolution")
    p.add_argument("trajectory", type=Path, help="trajectory CSV")
    p.add_argument("--k-list", type=int, nargs="+", default=[5, 30, 150])
    p.set_defaults(func=cmd_reconstruct)
    p = sub.add_parser("residual", parents=[common], help="residual distribution after a partial trajectory")
    p.add_argument("field", type=Path, help="EID grid file")
    p.add_argument("trajectory", type=Path, help="trajectory CSV")
    p.add_argument("--split", type=float, default=0.5, help="executed fraction of the trajectory")
    p.set_defaults(func=cmd_residual)
    p = sub.add_parser("scenarios", parents=[common], help="two-state and two-post toy results")
    p.set_defaults(func=cmd_scenarios)
    p = sub.add_parser("optimize", parents=[common], help="optimize one ergodic trajectory")
    p.add_argument("--score-target", type=float)
    p.set_defaults(func=cmd_optimize)
    p = sub.add_parser("simulate", parents=[common], help="simulate collection along a trajectory")
    p.add_argument("trajectory", type=Path)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("eid", parents=[common], help="write the configured EID and info grid")
    p.set_defaults(func=cmd_eid)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ex.ConfigError, FieldFormatError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OptimizerError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
