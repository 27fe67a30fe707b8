"""Closed-form toy scenarios: two-state horizon selection and two observation posts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

LEFT, RIGHT = "left", "right"


def _exact(x) -> Fraction:
    # decimal literal, so 0.1 becomes exactly 1/10 rather than its binary float
    return x if isinstance(x, Fraction) else Fraction(repr(x)) if isinstance(x, float) else Fraction(x)


@dataclass(frozen=True)
class TwoStateSpec:
    info_left: float = 0.8
    info_right: float = 0.2
    rate: float = 0.1
    switch_cost: float = 1.0
    start: str = LEFT

    def __post_init__(self):
        if _exact(self.info_left) + _exact(self.info_right) != 1:
            raise ValueError("info_left + info_right must equal 1")
        if min(self.info_left, self.info_right) < 0:
            raise ValueError("information must be non-negative")
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if self.switch_cost < 0:
            raise ValueError("switch_cost must be non-negative")
        if self.start not in (LEFT, RIGHT):
            raise ValueError("start must be 'left' or 'right'")

    def info(self, side: str) -> Fraction:
        return _exact(self.info_left if side == LEFT else self.info_right)


@dataclass(frozen=True)
class PerfectlyErgodic:
    pass


@dataclass(frozen=True)
class RepeatedErgodic:
    segment_len: int


@dataclass(frozen=True)
class ScheduleResult:
    collected: float
    switches: int
    steps_to_complete: int | None
    idle_steps: int
    sequence: tuple[str, ...]
    per_step: tuple[float, ...]

    @property
    def cost(self) -> int:
        return self.switches


def _other(side: str) -> str:
    return RIGHT if side == LEFT else LEFT


def ergodic_block(spec: TwoStateSpec, n: int, start: str) -> list[str]:
    """One ergodic segment of ``n`` steps, spending the start side's share first.

    Shares round to the nearest integer with ties toward the start side.
    """
    share = spec.info(start) * n
    here = math.floor(share + Fraction(1, 2))
    return [start] * here + [_other(start)] * (n - here)


def simulate_sequence(spec: TwoStateSpec, sequence) -> ScheduleResult:
    """Run the linear depletion model on a visit sequence, counting switches from ``spec.start``."""
    remaining = {LEFT: spec.info(LEFT), RIGHT: spec.info(RIGHT)}
    rate = _exact(spec.rate)
    total = remaining[LEFT] + remaining[RIGHT]
    got = Fraction(0)
    per_step, switches, idle, done_at = [], 0, 0, None
    pos = spec.start
    for n, side in enumerate(sequence, start=1):
        if side != pos:
            switches += 1
            pos = side
        take = min(rate, remaining[side])
        remaining[side] -= take
        got += take
        per_step.append(take)
        if take == 0 and done_at is None:
            idle += 1
        if done_at is None and got == total:
            done_at = n
    return ScheduleResult(float(got), switches, done_at, idle, tuple(sequence), tuple(float(p) for p in per_step))


def two_state_schedule(spec: TwoStateSpec, n: int, policy=PerfectlyErgodic()) -> ScheduleResult:
    """Collection, switch count, and completion step for an ergodic schedule.

    ``idle_steps`` counts steps that collect nothing while information is still
    left somewhere; ``steps_to_complete`` is the step at which the last unit is
    collected, or None if the schedule never finishes.
    """
    if n < 1:
        raise ValueError("need at least one step")
    if isinstance(policy, PerfectlyErgodic):
        sequence = ergodic_block(spec, n, spec.start)
    elif isinstance(policy, RepeatedErgodic):
        seg = policy.segment_len
        if seg < 1 or n % seg:
            raise ValueError(f"segment length {seg} does not divide {n}")
        sequence, pos = [], spec.start
        for _ in range(n // seg):
            block = ergodic_block(spec, seg, pos)
            sequence += block
            pos = block[-1]
    else:
        raise TypeError(f"unknown policy {policy!r}")
    return simulate_sequence(spec, sequence)


@dataclass(frozen=True)
class TwoPostSpec:
    sigma_left: float = 1.0
    sigma_right: float = 2.0
    N: int = 10

    def __post_init__(self):
        if not (self.sigma_left > 0 and self.sigma_right > 0):
            raise ValueError("noise levels must be positive")
        if self.sigma_left > self.sigma_right:
            raise ValueError("the left post must be the less noisy one")
        if self.N < 1:
            raise ValueError("need at least one measurement")


def two_post_variance(spec: TwoPostSpec, n_left: int) -> float:
    """Posterior variance of the fused distance estimate under a flat prior."""
    if not 0 <= n_left <= spec.N:
        raise ValueError(f"n_left must lie in [0, {spec.N}]")
    fisher = n_left / spec.sigma_left**2 + (spec.N - n_left) / spec.sigma_right**2
    return 1.0 / fisher


def ergodic_allocation(spec: TwoPostSpec) -> int:
    """Measurements at the left post in proportion to per-measurement Fisher information."""
    il, ir = 1.0 / spec.sigma_left**2, 1.0 / spec.sigma_right**2
    share = spec.N * il / (il + ir)
    # ties go to the left post, where the sensor starts
    return min(spec.N, math.floor(share + 0.5))
