"""Experiment configuration and the table-producing runs behind the CLI."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .ergodicity import PartialTrajectoryContext, ergodic_metric, oversampled_states, residual_field
from .infosim import EidSpec, GaussianComponent, InfoGrid, build_eid, discretize, simulate_collection
from .planner import OptimizerConfig, OptimizerError, composite_plan, greedy_plan, optimize
from .scenarios import (
    PerfectlyErgodic,
    RepeatedErgodic,
    TwoPostSpec,
    TwoStateSpec,
    ergodic_allocation,
    two_post_variance,
    two_state_schedule,
)
from .spectral import DensityField, Domain, decompose_field, decompose_points, reconstruct_field
from .trajectory import Trajectory, effort, rollout

DEFAULT_SCORE_TARGETS = (8e-2, 2.6e-2, 6e-3, 2.4e-3, 5.5e-4, 3.7e-4)
# sampling-based planner datapoint read off the published score plot; never computed here
RIG_REFERENCE = {"achieved_score": 0.02295, "info_collected_pct": 72.19}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    lower: tuple[float, ...] = (0.0, 0.0)
    upper: tuple[float, ...] = (1.0, 1.0)
    eid: tuple[dict, ...] = ({"mean": (0.65, 0.65), "sigma": 0.12, "weight": 1.0},)
    field_resolution: tuple[int, ...] = (100, 100)
    grid_resolution: tuple[int, ...] = (10, 10)
    K: int = 50
    N: int = 100
    dt: float = 0.5
    start: tuple[float, ...] = (0.25, 0.35)
    rate: float = 0.01
    score_targets: tuple[float, ...] = DEFAULT_SCORE_TARGETS
    # the smallest score targets sit below the floor reachable with the default
    # effort penalty, so the sweep runs with a lighter one
    sweep_control_penalty: float = 5e-4
    seed: int = 0
    output_dir: str = "results"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    @property
    def domain(self) -> Domain:
        return Domain(self.lower, self.upper)

    @property
    def eid_spec(self) -> EidSpec:
        comps = []
        for c in self.eid:
            cov = c["cov"] if "cov" in c else np.eye(len(c["mean"])) * float(c["sigma"]) ** 2
            comps.append(GaussianComponent(c["mean"], cov, c.get("weight", 1.0)))
        return EidSpec(tuple(comps))

    @property
    def optimizer_config(self) -> OptimizerConfig:
        return replace(self.optimizer, order=self.K, seed=self.seed)

    def phi(self) -> DensityField:
        return build_eid(self.eid_spec, self.domain, self.field_resolution)

    def info_grid(self, phi: DensityField | None = None) -> InfoGrid:
        return discretize(phi or self.phi(), self.grid_resolution, self.rate)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["optimizer"] = asdict(self.optimizer_config)
        return json.loads(json.dumps(d))

    def digest(self) -> str:
        """Hash of every parameter that affects results (the output directory does not)."""
        params = self.to_dict()
        params.pop("output_dir")
        blob = json.dumps(params, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def validate(self) -> "ExperimentConfig":
        """Build every derived object once so bad values surface as ConfigError."""
        try:
            if self.K < 0 or self.N < 1 or not self.dt > 0 or not self.rate > 0:
                raise ValueError("need K >= 0, N >= 1, dt > 0 and rate > 0")
            dom = self.domain
            if not dom.contains(self.start):
                raise ValueError(f"start {self.start} lies outside the domain")
            self.eid_spec
            fine, coarse = self.field_resolution, self.grid_resolution
            if len(fine) != dom.dim or len(coarse) != dom.dim or any(f % c for f, c in zip(fine, coarse)):
                raise ValueError("field_resolution must be a per-axis multiple of grid_resolution")
            if self.sweep_control_penalty < 0:
                raise ValueError("sweep_control_penalty must be non-negative")
            if any(not t > 0 for t in self.score_targets):
                raise ValueError("score targets must be positive")
            self.optimizer_config
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        return self


_TUPLE_FIELDS = {"lower", "upper", "field_resolution", "grid_resolution", "start", "score_targets"}


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read a YAML config; missing keys take the defaults, unknown keys are errors.

    ``overrides`` with value None are ignored (convenient for CLI flags).
    """
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    try:
        for key, value in raw.items():
            if key == "optimizer":
                opt_known = {f.name for f in fields(OptimizerConfig)}
                bad = set(value or {}) - opt_known
                if bad:
                    raise ConfigError(f"unknown optimizer keys: {sorted(bad)}")
                kwargs[key] = OptimizerConfig(**(value or {}))
            elif key == "eid":
                kwargs[key] = tuple(dict(c) for c in value)
            elif key in _TUPLE_FIELDS:
                kwargs[key] = tuple(value)
            else:
                kwargs[key] = value
        cfg = ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


# --- experiments -------------------------------------------------------------

def score_sweep(cfg: ExperimentConfig) -> tuple[list[dict], dict[float, Trajectory]]:
    """Info collected by PTO trajectories stopped at each score target.

    A single deterministic run is snapshotted the first time the score drops
    below each target, which is the same trajectory a separate run with that
    ``score_target`` would return. Greedy and the external reference row follow.
    """
    phi = cfg.phi()
    grid = cfg.info_grid(phi)
    opt = replace(cfg.optimizer_config, control_penalty=cfg.sweep_control_penalty)
    phi_c = decompose_field(phi, opt.order)
    targets = list(cfg.score_targets)
    snaps: dict[float, tuple[float, np.ndarray, int]] = {}

    def snapshot(it, ev, u):
        for t in targets:
            if t not in snaps and ev.score <= t:
                snaps[t] = (ev.score, u.copy(), it)
        return len(snaps) == len(targets)

    status = "ok"
    final = None
    try:
        final = optimize(cfg.start, cfg.N, cfg.dt, phi_c, opt, callback=snapshot)
    except OptimizerError as exc:
        status = f"failed: {exc}"

    rows, trajs = [], {}
    for t in targets:
        row = {"method": "pto", "score_target": t}
        if t in snaps:
            score, u, it = snaps[t]
            traj = rollout(cfg.start, u, cfg.dt, cfg.domain)
            note = "reached"
        elif final is not None:
            traj, score, it = final.trajectory, final.score, final.iterations
            note = f"not reached ({final.terminated_by})"
        else:
            rows.append(row | {"achieved_score": "", "info_collected_pct": "", "effort": "", "iterations": "", "note": status})
            continue
        trajs[t] = traj
        rows.append(row | {
            "achieved_score": score,
            "info_collected_pct": 100.0 * simulate_collection(grid, traj).collected / grid.initial_total,
            "effort": effort(traj),
            "iterations": it,
            "note": note,
        })

    greedy = greedy_plan(grid, cfg.start, cfg.N, cfg.dt)
    rows.append({
        "method": "greedy",
        "score_target": "",
        "achieved_score": ergodic_metric(decompose_points(cfg.domain, greedy.points, opt.order), phi_c),
        "info_collected_pct": 100.0 * simulate_collection(grid, greedy).collected / grid.initial_total,
        "effort": effort(greedy),
        "iterations": "",
        "note": "information-optimal baseline",
    })
    trajs["greedy"] = greedy
    rows.append({"method": "rig", "score_target": "", **RIG_REFERENCE, "effort": "", "iterations": "", "note": "external"})
    return rows, trajs


def cell_switches(grid: InfoGrid, traj: Trajectory) -> int:
    """Number of steps on which the occupied grid cell changes."""
    cells = [grid.cell_index(x) for x in traj.states]
    return sum(a != b for a, b in zip(cells, cells[1:]))


def horizon_experiment(cfg: ExperimentConfig, segments: int = 2) -> tuple[list[dict], dict[str, Trajectory]]:
    """One trajectory over the full horizon vs ``segments`` chained shorter ones."""
    if cfg.N % segments:
        raise ConfigError(f"N={cfg.N} is not divisible into {segments} segments")
    phi = cfg.phi()
    grid = cfg.info_grid(phi)
    opt = cfg.optimizer_config
    phi_c = decompose_field(phi, opt.order)
    plans = {
        "single": composite_plan(cfg.start, [cfg.N], cfg.dt, phi_c, opt),
        "composite": composite_plan(cfg.start, [cfg.N // segments] * segments, cfg.dt, phi_c, opt),
    }
    rows = []
    for name, traj in plans.items():
        sim = simulate_collection(grid, traj)
        rows.append({
            "variant": name,
            "segments": 1 if name == "single" else segments,
            "info_pct": 100.0 * sim.collected / grid.initial_total,
            "effort": effort(traj),
            "switches": cell_switches(grid, traj),
            "ergodic_score": ergodic_metric(decompose_points(cfg.domain, traj.points, opt.order), phi_c),
        })
    return rows, plans


def empirical_histogram(traj: Trajectory, resolution) -> DensityField:
    """Visit density of the trajectory's measurement states on a regular grid."""
    dom = traj.domain
    edges = [np.linspace(lo, hi, n + 1) for lo, hi, n in zip(dom.lower, dom.upper, resolution)]
    counts, _ = np.histogramdd(traj.points, bins=edges)
    return DensityField(dom, counts / (len(traj.points) * dom.cell_volume(resolution)))


def reconstruction_errors(traj: Trajectory, resolution, orders) -> tuple[list[dict], dict[int, DensityField]]:
    hist = empirical_histogram(traj, resolution)
    rows, fields_ = [], {}
    for k in orders:
        coeffs = decompose_points(traj.domain, traj.points, k)
        center = reconstruct_field(coeffs, resolution)
        average = reconstruct_field(coeffs, resolution, cell_average=True)
        fields_[k] = center
        rows.append({
            "K": k,
            "l2_cell_average": float(np.sqrt(np.sum((average.values - hist.values) ** 2) * hist.cell_volume)),
            "l2_cell_center": float(np.sqrt(np.sum((center.values - hist.values) ** 2) * hist.cell_volume)),
            "min_value": float(center.values.min()),
        })
    return rows, fields_


def split_residual(phi: DensityField, traj: Trajectory, split_fraction: float, order: int):
    """Residual distribution after executing the first ``split_fraction`` of ``traj``.

    Returns (residual field, sorted oversampled cells, context).
    """
    if not 0 < split_fraction < 1:
        raise ValueError("split_fraction must lie in (0, 1)")
    n_a = int(round(split_fraction * traj.N))
    if not 0 < n_a < traj.N:
        raise ValueError(f"split_fraction {split_fraction} leaves an empty part of a {traj.N}-step trajectory")
    ctx = PartialTrajectoryContext(decompose_points(traj.domain, traj.points[:n_a], order), n_a, traj.N - n_a)
    field_ = residual_field(ctx, phi, order)
    flagged = sorted(oversampled_states(ctx, phi, order))
    return field_, flagged, ctx


def scenario_tables(two_state: TwoStateSpec = TwoStateSpec(), two_post: TwoPostSpec = TwoPostSpec()):
    """Rows for the two-state horizon example and the two-post counterexample."""
    state_rows = []
    for label, n, policy in [
        ("ergodic N=10", 10, PerfectlyErgodic()),
        ("ergodic N=20", 20, PerfectlyErgodic()),
        ("ergodic N=5", 5, PerfectlyErgodic()),
        ("repeated 2x5", 10, RepeatedErgodic(5)),
    ]:
        r = two_state_schedule(two_state, n, policy)
        state_rows.append({
            "schedule": label,
            "steps": n,
            "collected": r.collected,
            "switches": r.switches,
            "switch_cost": r.switches * two_state.switch_cost,
            "steps_to_complete": "" if r.steps_to_complete is None else r.steps_to_complete,
            "idle_steps": r.idle_steps,
            "sequence": "".join(s[0].upper() for s in r.sequence),
        })
    n_erg = ergodic_allocation(two_post)
    post_rows = [
        {"allocation": "all left (optimal)", "n_left": two_post.N, "n_right": 0,
         "variance": two_post_variance(two_post, two_post.N)},
        {"allocation": "ergodic", "n_left": n_erg, "n_right": two_post.N - n_erg,
         "variance": two_post_variance(two_post, n_erg)},
    ]
    return state_rows, post_rows
