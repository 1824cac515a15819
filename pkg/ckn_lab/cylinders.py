"""Parabolic cylinders and their grid/snapshot sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import RangeError, RejectedInputError
from .grid import FloatArray, TorusGrid, displacement, distance
from .quadrature import corner_fraction, integrate_piecewise_linear
from .solver import Trajectory

Variant = Literal["Q", "Q*"]

# Q* reaches 7/8 r^2 into the past and 1/8 r^2 into the future.
PAST_FRACTION = 7 / 8
FUTURE_FRACTION = 1 / 8


@dataclass(frozen=True)
class ParabolicCylinder:
    """Space-time cylinder (t0, t1) x B(x, r) about the centre (t, x)."""

    t: float
    x: tuple[float, float, float]
    r: float
    variant: Variant = "Q"

    def __post_init__(self) -> None:
        if not self.r > 0:
            raise RejectedInputError(f"cylinder radius must be positive, got {self.r}")
        if self.variant not in ("Q", "Q*"):
            raise RejectedInputError(f"unknown cylinder variant {self.variant!r}")

    @property
    def time_span(self) -> tuple[float, float]:
        r2 = self.r * self.r
        if self.variant == "Q":
            return (self.t - r2, self.t)
        return (self.t - PAST_FRACTION * r2, self.t + FUTURE_FRACTION * r2)

    def half(self) -> ParabolicCylinder:
        return ParabolicCylinder(self.t, self.x, self.r / 2, self.variant)

    def contains(self, t: float, x: tuple[float, float, float], slack: float = 1e-12) -> bool:
        """(t, x) in the closed cylinder."""
        a, b = self.time_span
        return a - slack <= t <= b + slack and math.dist(x, self.x) <= self.r + slack

    def check_inside(self, traj: Trajectory) -> None:
        """RangeError unless the cylinder lies within the run and the box."""
        a, b = self.time_span
        slack = 1e-12 * max(1.0, abs(b))
        if a < traj.start - slack or b > traj.end + slack:
            msg = (
                f"cylinder time span ({a:.6g}, {b:.6g}) escapes the trajectory range "
                f"[{traj.start:.6g}, {traj.end:.6g}]"
            )
            raise RangeError(msg)
        if not traj.grid.in_core(self.x, self.r):
            msg = f"cylinder ball B({self.x}, {self.r}) leaves the box"
            raise RangeError(msg)

    def spatial_weights(self, grid: TorusGrid) -> FloatArray:
        """Per-node fraction of the cell inside the ball (8-corner rule)."""
        return corner_fraction(displacement(grid, self.x), self.r, grid.spacing)

    def node_mask(self, grid: TorusGrid) -> FloatArray:
        """Nodes inside the closed ball; the nearest node if none is."""
        mask = distance(grid, self.x) <= self.r
        if not mask.any():
            mask = np.zeros(grid.shape, dtype=bool)
            mask[grid.nearest_index(self.x)] = True
        return mask

    def to_dict(self) -> dict:
        return {"t": self.t, "x": list(self.x), "r": self.r, "variant": self.variant}


def bracket(traj: Trajectory, a: float, b: float) -> list[int]:
    """Snapshot indices whose piecewise-linear interpolant covers [a, b]."""
    times = traj.times
    lo = max(int(np.searchsorted(times, a, side="right")) - 1, 0)
    hi = min(int(np.searchsorted(times, b, side="left")), len(times) - 1)
    return list(range(lo, hi + 1))


def time_integral(
    traj: Trajectory, indices: list[int], values: list[float], a: float, b: float
) -> float:
    """Integral over (a, b) of per-snapshot values, linear in time between them."""
    if len(indices) == 1:
        return values[0] * (b - a)
    return integrate_piecewise_linear(traj.times[indices], values, a, b)


def window_indices(traj: Trajectory, cyl: ParabolicCylinder) -> list[int]:
    """Snapshots sampled inside the cylinder's time span.

    Falls back to the latest snapshot at or before the top of the span.
    """
    a, b = cyl.time_span
    inside = traj.indices_between(a, b)
    if inside:
        return inside
    before = [i for i, t in enumerate(traj.times) if t <= b]
    return [before[-1]] if before else [0]


def measured_sup(traj: Trajectory, cyl: ParabolicCylinder) -> float:
    """max |u| over the grid nodes and snapshots sampled in the cylinder."""
    mask = cyl.node_mask(traj.grid)
    best = 0.0
    for i in window_indices(traj, cyl):
        best = max(best, float(np.max(traj.snapshots[i].speed[mask])))
    return best
