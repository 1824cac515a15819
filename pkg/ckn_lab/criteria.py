"""Cylinder criteria, the delta window, the cylinder schedule and singular covers."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .budget import weighted_quantity_series
from .cylinders import (
    FUTURE_FRACTION,
    ParabolicCylinder,
    bracket,
    measured_sup,
    time_integral,
    window_indices,
)
from .errors import RangeError, RejectedInputError
from .grid import FloatArray, TorusGrid
from .quadrature import integrate_piecewise_linear
from .solver import Trajectory
from .weighted import riesz_integral

logger = logging.getLogger(__name__)

# Resolution for the delta bisection.
DELTA_RESOLUTION = 2.0**-10
# The time-dependent schedule needs windows at least this wide.
SCHEDULE_MIN_DELTA = 1 / 7
SCHEDULE_FRACTION = 6 / 7


@dataclass(frozen=True)
class MValue:
    """M(t, x, r) and its three pieces, prefactors included."""

    velocity: float
    mixed: float
    pressure: float

    @property
    def total(self) -> float:
        return self.velocity + self.mixed + self.pressure


def M_functional(
    traj: Trajectory, cyl: ParabolicCylinder, *, sign_error: bool = False
) -> MValue:
    """r^-2 int_Q (|u|^3 + |u||pi|) + r^-13/4 int (int_B |pi|)^(5/4) dtau.

    ``sign_error`` flips the sign of the r^-2 exponent; it exists only to
    check that the scale-invariance test can catch a broken M.
    """
    if cyl.variant != "Q":
        raise RejectedInputError("M is defined on past cylinders Q")
    a, b = cyl.time_span
    if a < 0:
        raise RangeError(f"cylinder starts before t = 0 ({a:.6g})")
    cyl.check_inside(traj)
    grid = traj.grid
    weights = cyl.spatial_weights(grid) * grid.cell_volume
    indices = bracket(traj, a, b)
    cubic, mixed, press = [], [], []
    for i in indices:
        snap = traj.snapshots[i]
        speed = snap.speed
        abs_p = np.abs(snap.pressure)
        cubic.append(float(np.sum(weights * speed**3)))
        mixed.append(float(np.sum(weights * speed * abs_p)))
        press.append(float(np.sum(weights * abs_p)) ** 1.25)
    r = cyl.r
    r_power = r**2 if sign_error else r**-2
    return MValue(
        velocity=r_power * time_integral(traj, indices, cubic, a, b),
        mixed=r_power * time_integral(traj, indices, mixed, a, b),
        pressure=r**-3.25 * time_integral(traj, indices, press, a, b),
    )


@dataclass(frozen=True)
class CKNVerdict:
    cylinder: ParabolicCylinder
    M: MValue
    epsilon1: float
    c0: float
    measured_sup: float

    @property
    def M_value(self) -> float:
        return self.M.total

    @property
    def passes(self) -> bool:
        return self.M.total <= self.epsilon1

    @property
    def sup_bound(self) -> float:
        """sqrt(c1) / r with c1 = c0 epsilon1^(2/3)."""
        c1 = self.c0 * self.epsilon1 ** (2 / 3)
        return math.sqrt(c1) / self.cylinder.r

    @property
    def sup_within_bound(self) -> bool:
        return self.measured_sup <= self.sup_bound

    def to_dict(self) -> dict:
        return {
            "r": self.cylinder.r,
            "M": self.M_value,
            "M_velocity": self.M.velocity,
            "M_mixed": self.M.mixed,
            "M_pressure": self.M.pressure,
            "passes": self.passes,
            "sup_bound": self.sup_bound,
            "measured_sup": self.measured_sup,
        }


def prop1_verdict(
    traj: Trajectory,
    cyl: ParabolicCylinder,
    epsilon1: float,
    c0: float = 1.0,
    *,
    sign_error: bool = False,
) -> CKNVerdict:
    """M <= epsilon1 on Q_r; the measured sup is taken over Q_{r/2}."""
    m = M_functional(traj, cyl, sign_error=sign_error)
    return CKNVerdict(cyl, m, epsilon1, c0, measured_sup(traj, cyl.half()))


@dataclass(frozen=True)
class Prop2Result:
    value: float
    epsilon3: float
    table: tuple[tuple[float, float | None], ...]
    caveat: str = ""

    @property
    def passes(self) -> bool:
        return math.isfinite(self.value) and self.value <= self.epsilon3


def gradient_cylinder_integral(traj: Trajectory, cyl: ParabolicCylinder) -> float:
    """r^-1 int_{Q*} |grad u|^2."""
    a, b = cyl.time_span
    cyl.check_inside(traj)
    grid = traj.grid
    weights = cyl.spatial_weights(grid) * grid.cell_volume
    indices = bracket(traj, a, b)
    values = [float(np.sum(weights * traj.snapshots[i].grad_sq)) for i in indices]
    return time_integral(traj, indices, values, a, b) / cyl.r


def prop2_limsup(
    traj: Trajectory,
    t: float,
    x: tuple[float, float, float],
    r_sequence: tuple[float, ...],
    epsilon3: float,
) -> Prop2Result:
    """Surrogate limsup of r^-1 int_{Q*_r} |grad u|^2: max over the three smallest admissible r."""
    floor = 2 * traj.grid.spacing
    for r in r_sequence:
        if r < floor:
            raise RejectedInputError(
                f"radius {r:.6g} is below the resolution floor 2*spacing = {floor:.6g}"
            )
    table: list[tuple[float, float | None]] = []
    admissible: list[tuple[float, float]] = []
    for r in sorted(r_sequence, reverse=True):
        try:
            value = gradient_cylinder_integral(traj, ParabolicCylinder(t, x, r, "Q*"))
        except RangeError:
            table.append((r, None))
            continue
        table.append((r, value))
        admissible.append((r, value))
    if not admissible:
        return Prop2Result(math.nan, epsilon3, tuple(table), "no admissible radius")
    smallest = sorted(admissible)[:3]
    caveat = "no-limsup" if len(r_sequence) == 1 else ""
    return Prop2Result(max(v for _, v in smallest), epsilon3, tuple(table), caveat)


@dataclass(frozen=True)
class DeltaResult:
    delta: float
    available: bool
    margins: tuple[tuple[float, float, float], ...] = ()
    reason: str = ""
    offending_t: float | None = None

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "available": self.available,
            "reason": self.reason,
            "offending_t": self.offending_t,
            "margins": [list(m) for m in self.margins],
        }


def _window_surrogate(
    times: FloatArray,
    integrand: FloatArray,
    t: float,
    delta: float,
    c: float,
    sigma: float = 0.0,
) -> float:
    a = sigma + (1 - delta) * (t - sigma)
    x = c * integrate_piecewise_linear(times, integrand, a, t)
    x = max(x, 0.0)
    return x + x ** (5 / 6)


def lemma41_delta(
    traj: Trajectory,
    x: tuple[float, float, float],
    t_star: float,
    epsilon1: float,
    c: float = 1.0,
    sigma: float = 0.0,
) -> DeltaResult:
    """Largest dyadic delta with N1 + N2 < epsilon1 on every window.

    The window ending at t is (sigma + (1 - delta)(t - sigma), t). N1 = c int
    E^(1/2) D over it and N2 = N1^(5/6), with E and D the unregularized
    (mu = 0) weighted quantities of u at x. Sampled t are the snapshot times
    in (sigma, sigma + t_star].
    """
    if t_star <= 0:
        return DeltaResult(0.0, False, reason="no certificate (t_star = 0)")
    energy, diss = weighted_quantity_series(traj, x)
    integrand = np.sqrt(np.maximum(energy, 0.0)) * diss
    times = traj.times
    end = sigma + t_star + 1e-12
    sampled = [float(t) for t in times if sigma < t <= end]
    if not sampled:
        return DeltaResult(0.0, False, reason="no snapshot inside (sigma, sigma + t_star]")

    def worst(delta: float) -> tuple[float, float]:
        values = [(_window_surrogate(times, integrand, t, delta, c, sigma), t) for t in sampled]
        return max(values)

    steps = int(round(1 / DELTA_RESOLUTION))
    lo_value, lo_t = worst(DELTA_RESOLUTION)
    if not lo_value < epsilon1:
        return DeltaResult(
            0.0,
            False,
            reason="surrogate exceeds epsilon1 on the narrowest window",
            offending_t=lo_t,
        )
    lo, hi = 1, steps - 1
    if worst(hi * DELTA_RESOLUTION)[0] < epsilon1:
        lo = hi
    else:
        # invariant: lo passes, hi fails
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if worst(mid * DELTA_RESOLUTION)[0] < epsilon1:
                lo = mid
            else:
                hi = mid
    delta = lo * DELTA_RESOLUTION
    margins = tuple(
        (t, v := _window_surrogate(times, integrand, t, delta, c, sigma), epsilon1 - v)
        for t in sampled
    )
    return DeltaResult(delta, True, margins)


@dataclass(frozen=True)
class ScheduleEntry:
    s: float
    t: float
    r: float
    M: float | None = None
    prop1_pass: bool | None = None
    decay_value: float | None = None
    decay_pass: bool | None = None
    error: str = ""

    @property
    def passes(self) -> bool:
        return bool(self.prop1_pass and self.decay_pass)

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "t": self.t,
            "r": self.r,
            "M": self.M,
            "prop1_pass": self.prop1_pass,
            "decay_value": self.decay_value,
            "decay_pass": self.decay_pass,
            "error": self.error,
        }


@dataclass(frozen=True)
class ScheduleReport:
    available: bool
    entries: tuple[ScheduleEntry, ...] = ()
    reason: str = ""

    @property
    def pass_count(self) -> int:
        return sum(e.passes for e in self.entries)

    @property
    def passes_all(self) -> bool:
        return self.available and all(e.passes for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "available": self.available,
            "reason": self.reason,
            "pass_count": self.pass_count,
            "entries": [e.to_dict() for e in self.entries],
        }


def decay_sup(traj: Trajectory, cyl: ParabolicCylinder, sigma: float = 0.0) -> float:
    """max |u(tau, y)| sqrt(tau - sigma) over grid samples of the cylinder."""
    mask = cyl.node_mask(traj.grid)
    best = 0.0
    for i in window_indices(traj, cyl):
        snap = traj.snapshots[i]
        elapsed = max(snap.time - sigma, 0.0)
        best = max(best, float(np.max(snap.speed[mask])) * math.sqrt(elapsed))
    return best


def theorem_TI_schedule(
    traj: Trajectory,
    x: tuple[float, float, float],
    t_star: float,
    c_constant: float,
    *,
    delta: float,
    epsilon1: float,
    c0: float = 1.0,
    s_count: int = 10,
    sigma: float = 0.0,
) -> ScheduleReport:
    """Cylinders Q_sqrt(s)(sigma + (7/6) s, x), s in (0, (6/7) t_star), with the decay check.

    Each s gets the M verdict at r = sqrt(s) and the check
    sup |u| sqrt(tau - sigma) <= c_constant over Q_sqrt(s/4)(sigma + (7/6) s, x).
    """
    if t_star <= 0:
        return ScheduleReport(False, reason="schedule unavailable: t_star = 0")
    if delta < SCHEDULE_MIN_DELTA:
        return ScheduleReport(
            False,
            reason=f"schedule unavailable: delta {delta:.4g} below {SCHEDULE_MIN_DELTA:.4g}",
        )
    horizon = SCHEDULE_FRACTION * t_star
    entries = []
    for j in range(1, s_count + 1):
        s = horizon * j / (s_count + 1)
        t = sigma + 7 * s / 6
        r = math.sqrt(s)
        cyl = ParabolicCylinder(t, x, r, "Q")
        try:
            verdict = prop1_verdict(traj, cyl, epsilon1, c0)
        except RangeError as exc:
            entries.append(ScheduleEntry(s, t, r, error=str(exc)))
            continue
        decay = decay_sup(traj, ParabolicCylinder(t, x, math.sqrt(s / 4), "Q"), sigma)
        entries.append(
            ScheduleEntry(
                s,
                t,
                r,
                M=verdict.M_value,
                prop1_pass=verdict.passes,
                decay_value=decay,
                decay_pass=decay <= c_constant,
            )
        )
    return ScheduleReport(True, tuple(entries))


@dataclass(frozen=True)
class InitialDataGauge:
    """Weighted data norm L = || u0 |y - center|^(-1/2) ||_2 against L0."""

    L: float
    L0: float
    center: tuple[float, float, float]

    @property
    def region_empty(self) -> bool:
        return not self.L < self.L0


def weighted_data_norm(
    u0: FloatArray,
    grid: TorusGrid,
    L0: float = 1.0,
    center: tuple[float, float, float] | None = None,
) -> InitialDataGauge:
    """L with the weight centred at ``center`` (box centre by default), mu = 0."""
    center = grid.center if center is None else center
    density = np.einsum("i...,i...->...", u0, u0)
    value = riesz_integral(density, grid, center, 0.0)
    return InitialDataGauge(math.sqrt(max(value, 0.0)), L0, center)


def thmD_region(
    gauge: InitialDataGauge, t: float, x: tuple[float, float, float]
) -> bool:
    """(t, x) in {|x - center|^2 < t (L0 - L)}, strict."""
    if gauge.region_empty:
        return False
    r2 = sum((a - b) ** 2 for a, b in zip(x, gauge.center, strict=True))
    return r2 < t * (gauge.L0 - gauge.L)


@dataclass(frozen=True)
class Covering:
    cylinders: tuple[ParabolicCylinder, ...] = ()
    assignments: tuple[int, ...] = field(default=(), repr=False)

    @property
    def count(self) -> int:
        return len(self.cylinders)

    @property
    def sum_r(self) -> float:
        return float(sum(c.r for c in self.cylinders))

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "sum_r": self.sum_r,
            "cylinders": [c.to_dict() for c in self.cylinders],
        }


def parabolic_distance(
    a: tuple[float, tuple[float, float, float]], b: tuple[float, tuple[float, float, float]]
) -> float:
    """max(|x - y|, |t - s|^(1/2))."""
    dx = math.dist(a[1], b[1])
    return max(dx, math.sqrt(abs(a[0] - b[0])))


def singular_candidates(
    failing: list[tuple[float, tuple[float, float, float]]],
    cluster_radius: float,
    min_radius: float | None = None,
) -> Covering:
    """Greedy cover of failing (t, x) samples by parabolic cylinders Q*.

    Samples are visited in (t, x) order; the first unassigned sample collects
    every unassigned sample within parabolic distance 2 * cluster_radius. The
    cluster's Q* is centred on the spatial bounding-box midpoint, with r large
    enough for the ball and for r^2 to span the cluster's times, and its top
    (t + r^2 / 8) at the latest sample. Every sample inside a new cylinder is
    assigned to it.
    """
    if not failing:
        return Covering()
    if cluster_radius <= 0:
        raise RejectedInputError("cluster_radius must be positive")
    floor = cluster_radius if min_radius is None else min_radius
    order = sorted(range(len(failing)), key=lambda i: (failing[i][0], tuple(failing[i][1])))
    points = [(float(failing[i][0]), tuple(map(float, failing[i][1]))) for i in order]
    owner = [-1] * len(points)
    cylinders: list[ParabolicCylinder] = []
    for p_idx, p in enumerate(points):
        if owner[p_idx] >= 0:
            continue
        cluster = [
            q_idx
            for q_idx, q in enumerate(points)
            if owner[q_idx] < 0 and parabolic_distance(p, q) <= 2 * cluster_radius
        ]
        ts = [points[i][0] for i in cluster]
        xs = np.array([points[i][1] for i in cluster])
        center_x = tuple(float(v) for v in (xs.min(axis=0) + xs.max(axis=0)) / 2)
        reach = max(math.dist(center_x, points[i][1]) for i in cluster)
        radius = max(reach, math.sqrt(max(ts) - min(ts)), floor)
        center_t = max(ts) - FUTURE_FRACTION * radius * radius
        cyl = ParabolicCylinder(center_t, center_x, radius, "Q*")  # type: ignore[arg-type]
        cyl_index = len(cylinders)
        cylinders.append(cyl)
        for q_idx, (qt, qx) in enumerate(points):
            if owner[q_idx] < 0 and cyl.contains(qt, qx):  # type: ignore[arg-type]
                owner[q_idx] = cyl_index
    assignments = [0] * len(points)
    for pos, i in enumerate(order):
        assignments[i] = owner[pos]
    logger.info("Covered %d failing samples with %d cylinders", len(points), len(cylinders))
    return Covering(tuple(cylinders), tuple(assignments))
