"""Expected information densities and the linear-depletion collection model.

Each cell of an :class:`InfoGrid` starts with the EID mass it covers. A
sensor occupying a cell for one step removes ``min(rate, remaining)`` from
it. The grid arithmetic is written against plain Python scalars so grids may
hold ``fractions.Fraction`` values for exact bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .spectral import DensityField, Domain, FieldFormatError, read_field_with_header, write_field


@dataclass(frozen=True)
class GaussianComponent:
    mean: np.ndarray
    cov: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = np.eye(mean.size) * float(cov)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-14):
            raise ValueError("covariance must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance must be positive definite") from None
        if not self.weight > 0:
            raise ValueError("component weight must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def isotropic(cls, mean, sigma: float, weight: float = 1.0):
        mean = np.asarray(mean, dtype=float)
        return cls(mean, np.eye(mean.size) * sigma**2, weight)

    def pdf(self, pts: np.ndarray) -> np.ndarray:
        d = pts - self.mean
        inv = np.linalg.inv(self.cov)
        mahal = np.einsum("...i,ij,...j->...", d, inv, d)
        norm = np.sqrt((2 * np.pi) ** self.mean.size * np.linalg.det(self.cov))
        return np.exp(-0.5 * mahal) / norm


@dataclass(frozen=True)
class EidSpec:
    components: tuple[GaussianComponent, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("an EID needs at least one component")
        total = sum(c.weight for c in comps)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"component weights must sum to 1, got {total}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def single(cls, mean=(0.65, 0.65), sigma: float = 0.12) -> "EidSpec":
        return cls((GaussianComponent.isotropic(mean, sigma),))

    @classmethod
    def bimodal(cls, means=((0.65, 0.65), (0.25, 0.7)), sigma: float = 0.12) -> "EidSpec":
        return cls(tuple(GaussianComponent.isotropic(m, sigma, 1.0 / len(means)) for m in means))


def build_eid(spec: EidSpec, domain: Domain, resolution) -> DensityField:
    """Mixture density at cell centers, renormalized over the (truncating) box."""
    def mixture(pts):
        return sum(c.weight * c.pdf(pts) for c in spec.components)

    return DensityField.from_function(domain, resolution, mixture, normalize=True)


@dataclass(frozen=True)
class InfoGrid:
    domain: Domain
    remaining: np.ndarray
    rate: float
    initial_total: float = field(default=None)

    def __post_init__(self):
        remaining = np.array(self.remaining)
        if remaining.dtype != object:
            remaining = remaining.astype(float)
        if remaining.ndim != self.domain.dim:
            raise ValueError(f"remaining must be {self.domain.dim}-D")
        if any(v < 0 for v in remaining.flat):
            raise ValueError("remaining information must be non-negative")
        if not self.rate > 0:
            raise ValueError("collection rate must be positive")
        remaining.flags.writeable = False
        object.__setattr__(self, "remaining", remaining)
        if self.initial_total is None:
            object.__setattr__(self, "initial_total", sum(remaining.flat))

    @classmethod
    def from_masses(cls, domain: Domain, masses, rate) -> "InfoGrid":
        """A fresh grid; masses must total 1."""
        grid = cls(domain, masses, rate)
        if abs(grid.total - 1) > 1e-9:
            raise ValueError(f"initial information must total 1, got {float(grid.total)}")
        return grid

    @property
    def resolution(self) -> tuple[int, ...]:
        return self.remaining.shape

    @property
    def total(self):
        return sum(self.remaining.flat)

    def cell_index(self, x) -> tuple[int, ...] | None:
        """Half-open cells [lo, hi) except the last on each axis, which is closed."""
        x = np.asarray(x, dtype=float)
        if not self.domain.contains(x, tol=0.0):
            return None
        frac = (x - self.domain.lower) / self.domain.lengths
        res = np.asarray(self.resolution)
        idx = np.minimum(np.floor(frac * res).astype(int), res - 1)
        return tuple(int(i) for i in idx)

    def cell_center(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=float)
        return self.domain.lower + (idx + 0.5) * self.domain.lengths / np.asarray(self.resolution)

    def with_remaining(self, remaining) -> "InfoGrid":
        return InfoGrid(self.domain, remaining, self.rate, self.initial_total)


def discretize(field: DensityField, resolution, rate) -> InfoGrid:
    """Cell masses of ``field`` on a grid that evenly divides the field's own grid."""
    res = tuple(int(n) for n in resolution)
    fine = field.resolution
    if len(res) != len(fine) or any(f % r for f, r in zip(fine, res)):
        raise ValueError(f"field resolution {fine} is not a multiple of {res}")
    mass = aggregate(field.values * field.cell_volume, [f // r for f, r in zip(fine, res)])
    return InfoGrid.from_masses(field.domain, mass, rate)


@dataclass(frozen=True)
class CollectionResult:
    collected: float
    grid: InfoGrid
    per_step: list
    cells: list


def simulate_collection(grid: InfoGrid, traj) -> CollectionResult:
    """Run the linear depletion model over a trajectory's visited states.

    ``traj`` may be a Trajectory (its start state is not a measurement) or an
    (n, dim) array of measurement states. Out-of-domain states collect nothing.
    """
    points = traj.points if hasattr(traj, "points") else np.atleast_2d(traj)
    remaining = grid.remaining.copy()
    remaining.flags.writeable = True
    per_step, cells = [], []
    for x in points:
        idx = grid.cell_index(x)
        cells.append(idx)
        if idx is None:
            per_step.append(0 * grid.rate)
            continue
        take = min(grid.rate, remaining[idx])
        remaining[idx] = remaining[idx] - take
        per_step.append(take)
    collected = sum(per_step, 0 * grid.rate)
    return CollectionResult(collected, grid.with_remaining(remaining), per_step, cells)


def collected_fraction(grid: InfoGrid, traj) -> float:
    """Collected information as a share of the grid's initial total."""
    return float(simulate_collection(grid, traj).collected / grid.initial_total)


def write_grid(grid: InfoGrid, path) -> None:
    """Grid file of remaining mass per cell with ``rate=<value>`` appended to the header."""
    vol = grid.domain.cell_volume(grid.resolution)
    dens = DensityField(grid.domain, np.asarray(grid.remaining, dtype=float) / vol)
    write_field(dens, path, extra_header=[f"rate={float(grid.rate)!r}"])


def read_grid(path) -> InfoGrid:
    field_, extra = read_field_with_header(path)
    rates = [t for t in extra if t.startswith("rate=")]
    if len(rates) != 1:
        raise FieldFormatError("header needs exactly one rate=<value> field", 1)
    try:
        rate = float(rates[0][5:])
    except ValueError:
        raise FieldFormatError(f"bad rate {rates[0]!r}", 1) from None
    return InfoGrid(field_.domain, field_.values * field_.cell_volume, rate)


def aggregate(masses: np.ndarray, factor: Sequence[int]) -> np.ndarray:
    """Sum blocks of ``factor`` cells per axis."""
    shape = []
    for n, f in zip(masses.shape, factor):
        shape += [n // f, f]
    return masses.reshape(shape).sum(axis=tuple(range(1, 2 * masses.ndim, 2)))
