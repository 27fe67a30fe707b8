"""Discrete single-integrator trajectories."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectral import Domain, FieldFormatError

CONSISTENCY_TOL = 1e-9


@dataclass(frozen=True)
class Trajectory:
    """States x_0..x_N and controls u_0..u_{N-1} with x_{n+1} = x_n + u_n * dt.

    The start x_0 is given rather than planned, so only ``points``
    (x_1..x_N) count toward time-averaged statistics and collection.
    """

    states: np.ndarray
    controls: np.ndarray
    dt: float
    domain: Domain

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        controls = np.array(self.controls, dtype=float).reshape(-1, self.domain.dim)
        if states.ndim != 2 or states.shape[1] != self.domain.dim:
            raise ValueError(f"states must be (N+1, {self.domain.dim}), got {states.shape}")
        if len(states) != len(controls) + 1:
            raise ValueError("need exactly one more state than controls")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        drift = states[1:] - states[:-1] - controls * self.dt
        scale = 1.0 + np.abs(states[1:]).max(initial=0.0)
        if drift.size and np.abs(drift).max() > CONSISTENCY_TOL * scale:
            raise ValueError("states and controls violate single-integrator dynamics")
        states.flags.writeable = False
        controls.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def N(self) -> int:
        return len(self.controls)

    @property
    def horizon(self) -> float:
        return self.N * self.dt

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]

    @property
    def points(self) -> np.ndarray:
        return self.states[1:]

    def split(self, n: int) -> tuple["Trajectory", "Trajectory"]:
        """Cut after ``n`` steps; the second part starts where the first ends."""
        if not 0 < n < self.N:
            raise ValueError(f"split index must be in (0, {self.N})")
        return (
            Trajectory(self.states[: n + 1], self.controls[:n], self.dt, self.domain),
            Trajectory(self.states[n:], self.controls[n:], self.dt, self.domain),
        )


def rollout(start, controls, dt: float, domain: Domain) -> Trajectory:
    start = np.asarray(start, dtype=float).reshape(domain.dim)
    controls = np.asarray(controls, dtype=float).reshape(-1, domain.dim)
    states = np.vstack([start, start + dt * np.cumsum(controls, axis=0)])
    return Trajectory(states, controls, dt, domain)


def concatenate(first: Trajectory, second: Trajectory) -> Trajectory:
    if first.dt != second.dt or first.domain != second.domain:
        raise ValueError("trajectories differ in dt or domain")
    if not np.allclose(first.end, second.start, rtol=0, atol=1e-12):
        raise ValueError("second trajectory must start where the first ends")
    return Trajectory(
        np.vstack([first.states, second.states[1:]]),
        np.vstack([first.controls, second.controls]),
        first.dt,
        first.domain,
    )


def effort(traj: Trajectory, dt_weighted: bool = False) -> float:
    """Sum of per-step Euclidean control norms, optionally scaled by dt."""
    total = float(np.linalg.norm(traj.controls, axis=1).sum())
    return total * traj.dt if dt_weighted else total


def write_csv(traj: Trajectory, path) -> None:
    """Columns n,x,y,ux,uy; the final state has blank controls."""
    if traj.domain.dim != 2:
        raise ValueError("trajectory CSV holds 2-D trajectories only")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "x", "y", "ux", "uy"])
        for n, x in enumerate(traj.states):
            u = [repr(float(v)) for v in traj.controls[n]] if n < traj.N else ["", ""]
            w.writerow([n, repr(float(x[0])), repr(float(x[1]))] + u)


def read_csv(path, dt: float, domain: Domain) -> Trajectory:
    """Read a trajectory CSV; states are re-derived from the start and controls."""
    text = Path(path).read_text().splitlines()
    rows = [ln for ln in text if not ln.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader, None)
    if header != ["n", "x", "y", "ux", "uy"]:
        raise FieldFormatError("expected header n,x,y,ux,uy", 1)
    states, controls = [], []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != 5:
            raise FieldFormatError(f"expected 5 columns, found {len(row)}", lineno)
        try:
            states.append([float(row[1]), float(row[2])])
            if row[3] != "" or row[4] != "":
                controls.append([float(row[3]), float(row[4])])
        except ValueError as exc:
            raise FieldFormatError(str(exc), lineno) from None
    if len(states) != len(controls) + 1:
        raise FieldFormatError("controls must be blank on the last row only")
    traj = rollout(states[0], np.reshape(controls, (-1, 2)), dt, domain)
    if not np.allclose(traj.states, states, atol=1e-9):
        raise FieldFormatError("listed states do not follow from controls and dt")
    return traj
