"""Ergodic metric and partial-trajectory bookkeeping.

When a trajectory of horizon T_a + T_b has already executed its first part
(coefficients c^a over T_a), the remainder is best planned against a
residual distribution whose coefficients are

    phi'_k = (T_a + T_b) / T_b * (phi_k - T_a / (T_a + T_b) * c^a_k)

Horizons may be given in seconds or in step counts; only their ratio matters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import CoefficientSet, DensityField, decompose_field, reconstruct_field

OVERSAMPLE_TOL = 1e-9


def ergodic_metric(c: CoefficientSet, phi: CoefficientSet) -> float:
    """Weighted squared distance sum_k Lambda_k (c_k - phi_k)^2."""
    c.check_compatible(phi)
    if not np.array_equal(c.weights, phi.weights):
        raise ValueError("coefficient sets use different weights")
    diff = c.coeffs - phi.coeffs
    return float(np.sum(phi.weights * diff * diff))


@dataclass(frozen=True)
class PartialTrajectoryContext:
    coeffs_a: CoefficientSet
    horizon_a: float
    horizon_b: float

    def __post_init__(self):
        if not (self.horizon_a > 0 and self.horizon_b > 0):
            raise ValueError("both horizons must be strictly positive")

    @property
    def executed_fraction(self) -> float:
        return self.horizon_a / (self.horizon_a + self.horizon_b)

    @property
    def remaining_fraction(self) -> float:
        return self.horizon_b / (self.horizon_a + self.horizon_b)


def combined_coefficients(ctx: PartialTrajectoryContext, coeffs_b: CoefficientSet) -> CoefficientSet:
    ctx.coeffs_a.check_compatible(coeffs_b)
    ta, tb = ctx.horizon_a, ctx.horizon_b
    mixed = (ta * ctx.coeffs_a.coeffs + tb * coeffs_b.coeffs) / (ta + tb)
    return coeffs_b.with_coeffs(mixed)


def residual_coefficients(ctx: PartialTrajectoryContext, phi: CoefficientSet) -> CoefficientSet:
    ctx.coeffs_a.check_compatible(phi)
    discounted = phi.coeffs - ctx.executed_fraction * ctx.coeffs_a.coeffs
    return phi.with_coeffs(discounted / ctx.remaining_fraction)


def discounted_field(ctx: PartialTrajectoryContext, phi_field: DensityField, order: int, resolution=None) -> DensityField:
    """The unnormalized phi - T_a/(T_a+T_b) c^a, band-limited to ``order``.

    Its integral is T_b / (T_a + T_b) whenever phi is a normalized density.
    """
    phi = decompose_field(phi_field, order, ctx.coeffs_a.weights)
    ctx.coeffs_a.check_compatible(phi)
    coeffs = phi.with_coeffs(phi.coeffs - ctx.executed_fraction * ctx.coeffs_a.coeffs)
    return reconstruct_field(coeffs, resolution or phi_field.resolution)


def residual_field(ctx: PartialTrajectoryContext, phi_field: DensityField, order: int, resolution=None) -> DensityField:
    """Signed residual distribution phi', reconstructed on ``resolution`` cells.

    Kept signed: negative cells mark oversampling. Use
    :func:`ergoinfo.spectral.clamp_normalize` when a valid density is needed.
    """
    phi = decompose_field(phi_field, order, ctx.coeffs_a.weights)
    return reconstruct_field(residual_coefficients(ctx, phi), resolution or phi_field.resolution)


def oversampled_states(
    ctx: PartialTrajectoryContext, phi_field: DensityField, order: int, resolution=None, tol: float = OVERSAMPLE_TOL
) -> set[tuple[int, ...]]:
    """Cells the executed part has oversampled: residual density below ``-tol``.

    Truncating a non-band-limited phi already rings below zero in its tails;
    that negativity is not the trajectory's doing, so the threshold is taken
    relative to phi's own reconstruction wherever that is negative.
    """
    res = resolution or phi_field.resolution
    phi = decompose_field(phi_field, order, ctx.coeffs_a.weights)
    residual = reconstruct_field(residual_coefficients(ctx, phi), res).values
    baseline = np.minimum(reconstruct_field(phi, res).values, 0.0)
    return {tuple(int(i) for i in idx) for idx in np.argwhere(residual < baseline - tol)}


def horizon_to_clear(
    ctx: PartialTrajectoryContext, phi_field: DensityField, order: int, resolution=None, max_doublings: int = 20
) -> tuple[float, int] | None:
    """Double T_b until no cell is oversampled; returns (T_b, doublings) or None."""
    tb = ctx.horizon_b
    for doublings in range(max_doublings + 1):
        trial = PartialTrajectoryContext(ctx.coeffs_a, ctx.horizon_a, tb)
        if not oversampled_states(trial, phi_field, order, resolution):
            return tb, doublings
        tb *= 2.0
    return None
