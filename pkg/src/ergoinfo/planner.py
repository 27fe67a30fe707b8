"""Ergodic trajectory optimization and the greedy information baseline.

For single-integrator dynamics every control sequence is feasible, so
projection-based trajectory optimization reduces to first-order descent on
the controls. The objective is

    J(u) = E(x(u)) + gamma * dt * sum_n |u_n|^2 + barrier(x(u))

where E is the ergodic metric over the visited states x_1..x_N and the
barrier is a quadratic penalty on excursions outside the domain.
"""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .infosim import InfoGrid, simulate_collection
from .spectral import CoefficientSet, DensityField, Domain, _axis_tables, decompose_field, normalizer_table
from .trajectory import Trajectory, concatenate, effort, rollout

log = logging.getLogger(__name__)

TERMINATION_REASONS = ("score_target", "grad_tol", "max_iters")


class OptimizerError(RuntimeError):
    def __init__(self, message: str, iteration: int):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")


@dataclass(frozen=True)
class OptimizerConfig:
    order: int = 50
    max_iters: int = 5000
    score_target: float | None = None
    grad_tol: float = 1e-6
    control_penalty: float = 1e-2
    barrier_weight: float = 1e3
    step_init: float = 1.0
    armijo_c: float = 1e-4
    backtrack_ratio: float = 0.5
    seed: int = 0
    init_radius: float = 0.1
    init_jitter: float = 0.02
    descent_space: str = "states"

    def __post_init__(self):
        if self.order < 0 or self.max_iters < 0:
            raise ValueError("order and max_iters must be non-negative")
        if not self.grad_tol > 0 or not self.step_init > 0:
            raise ValueError("grad_tol and step_init must be positive")
        if self.score_target is not None and not self.score_target > 0:
            raise ValueError("score_target must be positive")
        if self.control_penalty < 0 or self.barrier_weight < 0:
            raise ValueError("penalty weights must be non-negative")
        if not (0 < self.armijo_c < 1 and 0 < self.backtrack_ratio < 1):
            raise ValueError("armijo_c and backtrack_ratio must lie in (0, 1)")
        if self.descent_space not in ("states", "controls"):
            raise ValueError("descent_space must be 'states' or 'controls'")


@dataclass
class OptimizeReport:
    trajectory: Trajectory
    score_history: list[float]
    objective_history: list[float]
    effort_history: list[float]
    iterations: int
    terminated_by: str

    @property
    def score(self) -> float:
        return self.score_history[-1]

    def rows(self):
        """(iteration, score, objective, effort) per accepted iterate."""
        return list(zip(range(len(self.score_history)), self.score_history, self.objective_history, self.effort_history))


@dataclass(frozen=True)
class Evaluation:
    objective: float
    score: float
    grad: np.ndarray


class ErgodicProblem:
    """Objective and exact gradient over the control sequence for a fixed start."""

    def __init__(self, start, dt: float, phi: CoefficientSet, control_penalty: float, barrier_weight: float):
        self.domain = phi.domain
        self.start = np.asarray(start, dtype=float).reshape(self.domain.dim)
        self.dt = float(dt)
        self.phi = phi
        self.gamma = control_penalty
        self.barrier_weight = barrier_weight
        self._inv_h = 1.0 / normalizer_table(self.domain, phi.order)
        dim = self.domain.dim
        ks = string.ascii_lowercase[:dim]
        self._coeff_expr = ",".join(f"n{k}" for k in ks) + "->" + ks
        self._grad_expr = ks + "," + ",".join(f"n{k}" for k in ks) + "->n"

    def states(self, controls: np.ndarray) -> np.ndarray:
        return self.start + self.dt * np.cumsum(controls, axis=0)

    def coefficients(self, points: np.ndarray) -> np.ndarray:
        tables = _axis_tables(self.domain, self.phi.order, points)
        return np.einsum(self._coeff_expr, *tables) * self._inv_h / len(points)

    def evaluate(self, controls: np.ndarray, with_grad: bool = True) -> Evaluation:
        controls = np.asarray(controls, dtype=float).reshape(-1, self.domain.dim)
        points = self.states(controls)
        n = len(points)
        dom = self.domain
        tables, dtables = _axis_tables(dom, self.phi.order, points, derivative=True)
        c = np.einsum(self._coeff_expr, *tables) * self._inv_h / n
        diff = c - self.phi.coeffs
        score = float(np.sum(self.phi.weights * diff * diff))
        below = np.clip(dom.lower - points, 0.0, None)
        above = np.clip(points - dom.upper, 0.0, None)
        barrier = self.barrier_weight * float(np.sum(below**2 + above**2))
        penalty = self.gamma * self.dt * float(np.sum(controls**2))
        objective = score + penalty + barrier
        if not with_grad:
            return Evaluation(objective, score, None)

        w = 2.0 / n * self.phi.weights * diff * self._inv_h
        grad_x = np.empty_like(points)
        for i in range(dom.dim):
            mixed = list(tables)
            mixed[i] = dtables[i]
            grad_x[:, i] = np.einsum(self._grad_expr, w, *mixed)
        grad_x += 2.0 * self.barrier_weight * (above - below)
        # x_j depends on u_m for every m <= j, each with weight dt
        grad_u = self.dt * np.cumsum(grad_x[::-1], axis=0)[::-1]
        grad_u += 2.0 * self.gamma * self.dt * controls
        return Evaluation(objective, score, grad_u)


def _phi_coeffs(phi, order: int) -> CoefficientSet:
    if isinstance(phi, CoefficientSet):
        return phi if phi.order == order else phi.truncated(order)
    return decompose_field(phi, order)


def objective(traj: Trajectory, phi_coeffs: CoefficientSet, config: OptimizerConfig) -> float:
    problem = ErgodicProblem(traj.start, traj.dt, phi_coeffs, config.control_penalty, config.barrier_weight)
    return problem.evaluate(traj.controls, with_grad=False).objective


def objective_grad(traj: Trajectory, phi_coeffs: CoefficientSet, config: OptimizerConfig) -> np.ndarray:
    """Gradient of :func:`objective` with respect to every control, shaped like ``traj.controls``."""
    problem = ErgodicProblem(traj.start, traj.dt, phi_coeffs, config.control_penalty, config.barrier_weight)
    return problem.evaluate(traj.controls).grad


def initial_controls(start, n: int, dt: float, domain: Domain, radius: float, jitter: float, seed: int) -> np.ndarray:
    """Low-amplitude outward spiral about ``start`` with seeded positional jitter."""
    rng = np.random.default_rng(seed)
    start = np.asarray(start, dtype=float)
    t = np.arange(1, n + 1) / n
    theta = 4.0 * np.pi * t
    offsets = np.zeros((n, domain.dim))
    offsets[:, 0] = radius * t * np.cos(theta)
    if domain.dim > 1:
        offsets[:, 1] = radius * t * np.sin(theta)
    pts = start + offsets + rng.normal(0.0, jitter, size=offsets.shape)
    pts = np.clip(pts, domain.lower, domain.upper)
    return np.diff(np.vstack([start, pts]), axis=0) / dt


def optimize(
    start,
    n: int,
    dt: float,
    phi,
    config: OptimizerConfig = OptimizerConfig(),
    init=None,
    callback: Callable[[int, Evaluation, np.ndarray], bool] | None = None,
) -> OptimizeReport:
    """Descend on the control sequence with Armijo backtracking.

    ``phi`` is a DensityField or a CoefficientSet. ``callback(it, evaluation,
    controls)`` is invoked on every accepted iterate; returning True stops the
    run early (reported as ``score_target``).

    The returned trajectory is the iterate with the lowest ergodic score, and
    ``score_history`` is the running minimum of the score; ``objective_history``
    holds J at each accepted iterate.
    """
    if n < 1:
        raise ValueError("need at least one step")
    phi_c = _phi_coeffs(phi, config.order)
    domain = phi_c.domain
    if not domain.contains(start, tol=1e-6):
        raise ValueError(f"start {start} lies outside the domain")
    problem = ErgodicProblem(start, dt, phi_c, config.control_penalty, config.barrier_weight)
    if init is None:
        u = initial_controls(start, n, dt, domain, config.init_radius, config.init_jitter, config.seed)
    else:
        u = np.array(init, dtype=float).reshape(n, domain.dim)

    ev = problem.evaluate(u)
    if not np.isfinite(ev.objective):
        raise OptimizerError("non-finite objective", 0)
    # J decreases on every accepted step but E alone may tick up by roundoff-sized
    # amounts late in a run; the report keeps the lowest-E iterate
    best_u, best_score = u, ev.score
    scores, objectives, efforts = [ev.score], [ev.objective], [_effort(u)]
    reason = "max_iters"
    it = 0
    while True:
        if config.score_target is not None and ev.score <= config.score_target:
            reason = "score_target"
            break
        if callback is not None and callback(it, ev, u):
            reason = "score_target"
            break
        direction = _descent_direction(ev.grad, dt, config.descent_space)
        gnorm2 = -float(np.sum(ev.grad * direction))
        if np.sqrt(gnorm2) <= config.grad_tol:
            reason = "grad_tol"
            break
        if it >= config.max_iters:
            break
        accepted = None
        step = config.step_init
        while step > 1e-16:
            cand = u + step * direction
            trial = problem.evaluate(cand, with_grad=False)
            if not np.isfinite(trial.objective):
                raise OptimizerError("non-finite objective during line search", it + 1)
            if trial.objective <= ev.objective - config.armijo_c * step * gnorm2:
                accepted = cand
                break
            step *= config.backtrack_ratio
        if accepted is None:
            # no representable step decreases J: stationary to working precision
            reason = "grad_tol"
            break
        u = accepted
        ev = problem.evaluate(u)
        it += 1
        if ev.score < best_score:
            best_u, best_score = u, ev.score
        scores.append(best_score)
        objectives.append(ev.objective)
        efforts.append(_effort(u))
    log.debug("optimize stopped after %d iterations (%s), score %.3e", it, reason, best_score)
    traj = rollout(start, best_u, dt, domain)
    return OptimizeReport(traj, scores, objectives, efforts, it, reason)


def _descent_direction(grad_u: np.ndarray, dt: float, space: str) -> np.ndarray:
    """Steepest descent in control space, or in state space mapped back to controls.

    Descending on the states is steepest descent under the metric induced by
    the state map, which is far better conditioned than the raw controls.
    Either way the directional derivative is minus the squared norm of the
    gradient in that space.
    """
    if space == "controls":
        return -grad_u
    grad_x = np.diff(np.vstack([grad_u, np.zeros_like(grad_u[:1])]), axis=0) / -dt
    return -np.diff(np.vstack([np.zeros_like(grad_x[:1]), grad_x]), axis=0) / dt


def _effort(u: np.ndarray) -> float:
    return float(np.linalg.norm(u, axis=1).sum())


def greedy_plan(info: InfoGrid, start, n: int, dt: float) -> Trajectory:
    """Jump each step to the center of the cell with the most information left.

    Ties go to the lowest row-major cell index. Controls are unbounded.
    """
    if n < 1:
        raise ValueError("need at least one step")
    grid = info
    state = np.asarray(start, dtype=float)
    states = [state]
    for _ in range(n):
        flat = list(grid.remaining.flat)
        best = max(range(len(flat)), key=flat.__getitem__)
        idx = np.unravel_index(best, grid.resolution)
        target = grid.cell_center(idx)
        if grid.cell_index(state) == tuple(int(i) for i in idx):
            target = state
        states.append(target)
        grid = simulate_collection(grid, target[None, :]).grid
        state = target
    states = np.array(states)
    return Trajectory(states, np.diff(states, axis=0) / dt, dt, info.domain)


def composite_plan(start, segments: Sequence[int], dt: float, phi, config: OptimizerConfig = OptimizerConfig()) -> Trajectory:
    """Chain independently optimized segments, each against the same ``phi``."""
    if not segments:
        raise ValueError("need at least one segment")
    phi_c = _phi_coeffs(phi, config.order)
    traj = None
    pos = np.asarray(start, dtype=float)
    for n in segments:
        part = optimize(pos, n, dt, phi_c, config).trajectory
        traj = part if traj is None else concatenate(traj, part)
        pos = part.end
    return traj
