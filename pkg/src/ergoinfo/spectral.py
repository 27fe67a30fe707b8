"""Cosine Fourier basis on box domains.

Densities and trajectories are projected onto the separable basis

    F_k(x) = (1/h_k) * prod_i cos(k_i * pi * (x_i - lower_i) / L_i)

with h_k chosen so that each F_k has unit L2 norm over the box. Coefficients
are stored densely, indexed by the multi-index k = (k_1, ..., k_s) with each
k_i in [0, K], so an order-K set for an s-dimensional box holds (K+1)^s
entries in row-major order.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

MAX_DIM = 3


class DomainError(ValueError):
    """A state lies outside the domain where it is required to be inside."""


class FieldFormatError(ValueError):
    """A serialized field or coefficient file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Domain:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape or lower.size == 0:
            raise ValueError("lower and upper must be non-empty and of equal length")
        if lower.size > MAX_DIM:
            raise ValueError(f"at most {MAX_DIM} dimensions are supported")
        if not np.all(lower < upper):
            raise ValueError(f"need lower < upper on every axis, got {lower} and {upper}")
        lower.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, dim: int = 2) -> "Domain":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def lengths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def __eq__(self, other):
        if not isinstance(other, Domain):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __hash__(self):
        return hash((tuple(self.lower), tuple(self.upper)))

    def cell_centers(self, resolution: Sequence[int]) -> list[np.ndarray]:
        """Per-axis cell-center coordinates for a regular grid."""
        resolution = _check_resolution(self, resolution)
        return [
            lo + (np.arange(n) + 0.5) * (hi - lo) / n
            for lo, hi, n in zip(self.lower, self.upper, resolution)
        ]

    def cell_volume(self, resolution: Sequence[int]) -> float:
        resolution = _check_resolution(self, resolution)
        return float(np.prod(self.lengths / np.asarray(resolution)))


def _check_resolution(domain: Domain, resolution) -> tuple[int, ...]:
    res = tuple(int(n) for n in resolution)
    if len(res) != domain.dim or any(n < 1 for n in res):
        raise ValueError(f"resolution {resolution} does not fit a {domain.dim}-D domain")
    return res


@dataclass(frozen=True)
class DensityField:
    """Cell-centered values on a regular grid; ``values[i, j]`` is x-cell i, y-cell j.

    ``signed`` marks raw intermediates (band-limited reconstructions, residual
    distributions) that may be negative or unnormalized.
    """

    domain: Domain
    values: np.ndarray
    signed: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != self.domain.dim:
            raise ValueError(f"values must be {self.domain.dim}-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if not self.signed and np.any(values < 0):
            raise ValueError("density values must be non-negative; use signed=True for raw fields")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def resolution(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def cell_volume(self) -> float:
        return self.domain.cell_volume(self.resolution)

    def cell_centers(self) -> list[np.ndarray]:
        return self.domain.cell_centers(self.resolution)

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def normalized(self) -> "DensityField":
        total = self.integral()
        if total <= 0:
            raise ValueError("cannot normalize a field with non-positive integral")
        return DensityField(self.domain, self.values / total, signed=self.signed)

    @classmethod
    def from_function(cls, domain: Domain, resolution, func: Callable, normalize: bool = True):
        """Evaluate ``func`` on stacked cell centers of shape ``(..., dim)``."""
        grids = np.meshgrid(*domain.cell_centers(resolution), indexing="ij")
        pts = np.stack(grids, axis=-1)
        out = cls(domain, func(pts))
        return out.normalized() if normalize else out

    @classmethod
    def uniform(cls, domain: Domain, resolution) -> "DensityField":
        res = _check_resolution(domain, resolution)
        return cls(domain, np.full(res, 1.0 / domain.volume))


def clamp_normalize(field: DensityField) -> DensityField:
    """Zero out negative values and renormalize into a valid density."""
    values = np.clip(field.values, 0.0, None)
    total = values.sum() * field.cell_volume
    if total <= 0:
        raise ValueError("field has no positive mass")
    return DensityField(field.domain, values / total)


def multi_indices(order: int, dim: int) -> np.ndarray:
    """All multi-indices with entries in [0, order], row-major, shape ((order+1)^dim, dim)."""
    return np.array(list(itertools.product(range(order + 1), repeat=dim)), dtype=int).reshape(-1, dim)


def normalizer(domain: Domain, k) -> float:
    """h_k such that the basis function for ``k`` has unit L2 norm on ``domain``."""
    k = np.asarray(k)
    return float(np.sqrt(np.prod(np.where(k == 0, 1.0, 0.5) * domain.lengths)))


def normalizer_table(domain: Domain, order: int) -> np.ndarray:
    """h_k for every multi-index, shaped (order+1,)*dim."""
    per_axis = [np.where(np.arange(order + 1) == 0, 1.0, 0.5) * L for L in domain.lengths]
    return np.sqrt(_outer(per_axis))


def sobolev_weights(order: int, dim: int) -> np.ndarray:
    """Lambda_k = (1 + |k|^2)^(-(dim+1)/2), shaped (order+1,)*dim."""
    ks = np.arange(order + 1)
    sq = sum(np.meshgrid(*([ks**2] * dim), indexing="ij"))
    return (1.0 + sq) ** (-(dim + 1) / 2.0)


def _outer(vectors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.asarray(vectors[0], dtype=float)
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return out


def _check_index(domain: Domain, k, x) -> tuple[np.ndarray, np.ndarray]:
    k = np.asarray(k)
    x = np.asarray(x, dtype=float)
    if k.shape != (domain.dim,) or x.shape != (domain.dim,):
        raise ValueError(f"k and x must both have length {domain.dim}, got {k.shape} and {x.shape}")
    if np.any(k < 0):
        raise ValueError("multi-index entries must be non-negative")
    return k, x


def basis_eval(domain: Domain, k, x) -> float:
    k, x = _check_index(domain, k, x)
    phase = k * np.pi * (x - domain.lower) / domain.lengths
    return float(np.prod(np.cos(phase)) / normalizer(domain, k))


def basis_grad(domain: Domain, k, x) -> np.ndarray:
    k, x = _check_index(domain, k, x)
    scale = k * np.pi / domain.lengths
    phase = scale * (x - domain.lower)
    cos, sin = np.cos(phase), np.sin(phase)
    grad = np.empty(domain.dim)
    for i in range(domain.dim):
        grad[i] = -scale[i] * sin[i] * np.prod(np.delete(cos, i))
    return grad / normalizer(domain, k)


def _axis_tables(domain: Domain, order: int, points: np.ndarray, derivative: bool = False):
    """Per-axis cosine tables cos(k pi (x - lo)/L), each shaped (n_points, order+1)."""
    ks = np.arange(order + 1)
    tables, dtables = [], []
    for i in range(domain.dim):
        scale = ks * np.pi / domain.lengths[i]
        phase = np.multiply.outer(points[:, i] - domain.lower[i], scale)
        tables.append(np.cos(phase))
        if derivative:
            dtables.append(-np.sin(phase) * scale)
    return (tables, dtables) if derivative else tables


def _point_outer(tables: Sequence[np.ndarray]) -> np.ndarray:
    """Row-wise outer product: (n, a), (n, b), ... -> (n, a, b, ...)."""
    out = tables[0]
    for t in tables[1:]:
        out = out[..., None] * t.reshape((t.shape[0],) + (1,) * (out.ndim - 1) + (t.shape[1],))
    return out


def basis_matrix(domain: Domain, order: int, points) -> np.ndarray:
    """F_k evaluated at every point, shaped (n_points,) + (order+1,)*dim.

    No domain check: the cosine form extends smoothly outside the box, which
    the optimizer relies on when states briefly leave it.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return _point_outer(_axis_tables(domain, order, points)) / normalizer_table(domain, order)


def basis_matrix_grad(domain: Domain, order: int, points) -> np.ndarray:
    """Gradients of F_k at every point, shaped (dim, n_points) + (order+1,)*dim."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tables, dtables = _axis_tables(domain, order, points, derivative=True)
    h = normalizer_table(domain, order)
    out = []
    for i in range(domain.dim):
        mixed = list(tables)
        mixed[i] = dtables[i]
        out.append(_point_outer(mixed) / h)
    return np.stack(out)


@dataclass(frozen=True)
class CoefficientSet:
    domain: Domain
    order: int
    coeffs: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        shape = (self.order + 1,) * self.domain.dim
        coeffs = np.array(self.coeffs, dtype=float).reshape(shape)
        weights = sobolev_weights(self.order, self.domain.dim) if self.weights is None else self.weights
        weights = np.array(weights, dtype=float).reshape(shape)
        if np.any(weights < 0):
            raise ValueError("weights must be non-negative")
        coeffs.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.coeffs.size

    def __getitem__(self, k):
        return float(self.coeffs[tuple(k)])

    def truncated(self, order: int) -> "CoefficientSet":
        if order > self.order:
            raise ValueError(f"cannot truncate order {self.order} up to {order}")
        sl = (slice(0, order + 1),) * self.domain.dim
        return CoefficientSet(self.domain, order, self.coeffs[sl], self.weights[sl])

    def with_coeffs(self, coeffs) -> "CoefficientSet":
        return CoefficientSet(self.domain, self.order, coeffs, self.weights)

    def check_compatible(self, other: "CoefficientSet") -> None:
        if self.domain != other.domain or self.order != other.order:
            raise ValueError(
                f"coefficient sets differ in domain or order ({self.order} vs {other.order})"
            )


def decompose_field(field: DensityField, order: int, weights=None) -> CoefficientSet:
    """Midpoint-rule projection of a gridded field onto the basis."""
    if order < 0:
        raise ValueError("order must be non-negative")
    domain = field.domain
    coeffs = field.values
    ks = np.arange(order + 1)
    # contract the leading grid axis each pass; coefficient axes accumulate at the back
    for i, centers in enumerate(field.cell_centers()):
        table = np.cos(np.multiply.outer(centers - domain.lower[i], ks * np.pi / domain.lengths[i]))
        coeffs = np.tensordot(coeffs, table, axes=([0], [0]))
    coeffs = coeffs * field.cell_volume / normalizer_table(domain, order)
    return CoefficientSet(domain, order, coeffs, weights)


def decompose_points(domain: Domain, points, order: int, weights=None, check: bool = True) -> CoefficientSet:
    """Time-average of the basis over a set of equally weighted states."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != domain.dim or points.shape[0] == 0:
        raise ValueError(f"points must be a non-empty (n, {domain.dim}) array")
    if check:
        bad = np.any((points < domain.lower - 1e-12) | (points > domain.upper + 1e-12), axis=1)
        if np.any(bad):
            n = int(np.flatnonzero(bad)[0])
            raise DomainError(f"state {n} at {points[n]} lies outside the domain")
    coeffs = basis_matrix(domain, order, points).mean(axis=0)
    return CoefficientSet(domain, order, coeffs, weights)


def decompose_trajectory(traj, order: int, weights=None) -> CoefficientSet:
    """Coefficients of a trajectory's visited states (the fixed start is excluded)."""
    return decompose_points(traj.domain, traj.points, order, weights)


def reconstruct_field(coeffs: CoefficientSet, resolution, cell_average: bool = False) -> DensityField:
    """Evaluate the truncated series on a grid, as a signed raw field.

    By default each cell holds the series value at its center; with
    ``cell_average`` it holds the exact mean of the series over the cell.
    """
    domain = coeffs.domain
    values = coeffs.coeffs / normalizer_table(domain, coeffs.order)
    ks = np.arange(coeffs.order + 1)
    for i, centers in enumerate(domain.cell_centers(resolution)):
        freq = ks * np.pi / domain.lengths[i]
        if cell_average:
            half = 0.5 * domain.lengths[i] / len(centers)
            lo = np.multiply.outer(centers - half - domain.lower[i], freq)
            hi = np.multiply.outer(centers + half - domain.lower[i], freq)
            with np.errstate(divide="ignore", invalid="ignore"):
                table = np.where(freq > 0, (np.sin(hi) - np.sin(lo)) / (2 * half * freq), 1.0)
        else:
            table = np.cos(np.multiply.outer(centers - domain.lower[i], freq))
        # contract the leading coefficient axis; grid axes accumulate at the back
        values = np.tensordot(values, table, axes=([0], [1]))
    return DensityField(domain, values, signed=True)


# --- serialization --------------------------------------------------------

def write_field(field: DensityField, path, extra_header: Sequence[str] = ()) -> None:
    """Plain-text grid: ``resX resY x0 y0 x1 y1 [extra...]`` then resY rows, lowest y first."""
    if field.domain.dim != 2:
        raise ValueError("grid files hold 2-D fields only")
    nx, ny = field.resolution
    (x0, y0), (x1, y1) = field.domain.lower, field.domain.upper
    lines = [" ".join([str(nx), str(ny)] + [repr(float(v)) for v in (x0, y0, x1, y1)] + list(extra_header))]
    for j in range(ny):
        lines.append(" ".join(repr(float(v)) for v in field.values[:, j]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_with_header(path) -> tuple[DensityField, list[str]]:
    """Parse a grid file; returns the field and any extra header tokens."""
    lines = [ln for ln in Path(path).read_text().splitlines()]
    if not lines:
        raise FieldFormatError("empty grid file", 1)
    head = lines[0].split()
    if len(head) < 6:
        raise FieldFormatError("header needs resX resY x0 y0 x1 y1", 1)
    try:
        nx, ny = int(head[0]), int(head[1])
        x0, y0, x1, y1 = (float(v) for v in head[2:6])
    except ValueError as exc:
        raise FieldFormatError(f"bad header: {exc}", 1) from None
    try:
        domain = Domain([x0, y0], [x1, y1])
    except ValueError as exc:
        raise FieldFormatError(str(exc), 1) from None
    rows = lines[1:]
    if len(rows) < ny:
        raise FieldFormatError(f"expected {ny} rows, found {len(rows)}", len(lines) + 1)
    values = np.empty((nx, ny))
    for j in range(ny):
        tokens = rows[j].split()
        if len(tokens) != nx:
            raise FieldFormatError(f"expected {nx} values, found {len(tokens)}", j + 2)
        try:
            values[:, j] = [float(t) for t in tokens]
        except ValueError as exc:
            raise FieldFormatError(str(exc), j + 2) from None
    if any(r.strip() for r in rows[ny:]):
        raise FieldFormatError("trailing data after grid rows", ny + 2)
    if not np.all(np.isfinite(values)):
        raise FieldFormatError("non-finite value in grid")
    return DensityField(domain, values, signed=bool(np.any(values < 0))), head[6:]


def read_field(path) -> DensityField:
    return read_field_with_header(path)[0]


def write_coefficients(coeffs: CoefficientSet, path) -> None:
    if coeffs.domain.dim != 2:
        raise ValueError("coefficient CSV holds 2-D sets only")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k1", "k2", "coeff", "weight"])
        for k1, k2 in multi_indices(coeffs.order, 2):
            w.writerow([k1, k2, repr(float(coeffs.coeffs[k1, k2])), repr(float(coeffs.weights[k1, k2]))])


def read_coefficients(path, domain: Domain) -> CoefficientSet:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise FieldFormatError("no coefficient rows", 2)
    try:
        ks = [(int(r["k1"]), int(r["k2"])) for r in rows]
        order = max(max(k) for k in ks)
        coeffs = np.zeros((order + 1, order + 1))
        weights = np.zeros((order + 1, order + 1))
        for n, (r, k) in enumerate(zip(rows, ks)):
            coeffs[k] = float(r["coeff"])
            weights[k] = float(r["weight"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FieldFormatError(f"bad coefficient row: {exc}") from None
    if len(set(ks)) != (order + 1) ** 2:
        raise FieldFormatError(f"expected {(order + 1) ** 2} distinct indices, found {len(set(ks))}")
    return CoefficientSet(domain, order, coeffs, weights)
