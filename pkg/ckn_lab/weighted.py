"""Riesz-weighted energies, the psi functional and its mollified sequence.

All weights are centred at a point x and built from the kernel
(|x - y|^2 + mu^2)^(-1/2). With ``mu == 0`` the cell containing x is integrated
exactly (closed-form integral of 1/|z| over a box) and every other cell by the
midpoint rule.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import integrate

from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import ExponentConditionError, PreconditionError, RejectedInputError
from .fields import FieldSnapshot, MollifierSchedule, mollify
from .grid import (
    FloatArray,
    TorusGrid,
    check_lattices,
    displacement,
    distance,
    grad_squared,
    to_physical,
    to_spectral,
)
from .quadrature import (
    UNIT_CUBE_INVERSE_DISTANCE,
    ball_power_integral,
    box_inverse_distance,
)
from .solver import Trajectory

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightSpec:
    """Weight centre x and regularization length mu >= 0."""

    x: tuple[float, float, float]
    mu: float = 0.0

    def __post_init__(self) -> None:
        if self.mu < 0 or not math.isfinite(self.mu):
            raise RejectedInputError(f"mu must be a finite nonnegative number, got {self.mu}")


def _magnitude_sq(v: FloatArray) -> FloatArray:
    return np.einsum("i...,i...->...", v, v)


def riesz_integral(
    density: FloatArray,
    grid: TorusGrid,
    x: tuple[float, float, float],
    mu: float,
    *,
    singular_cell: bool = True,
) -> float:
    """Integral of density(y) / (|x - y|^2 + mu^2)^(1/2) over the box."""
    check_lattices(density, grid, None)
    if mu < 0:
        raise RejectedInputError(f"mu must be nonnegative, got {mu}")
    dv = grid.cell_volume
    d = distance(grid, x)
    if mu > 0:
        return float(np.sum(density / np.sqrt(d * d + mu * mu))) * dv
    if not singular_cell:
        raise PreconditionError("mu = 0 needs the singular-cell quadrature rule")
    idx = grid.nearest_index(x)
    with np.errstate(divide="ignore"):
        kernel = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 0.0)
    kernel[idx] = 0.0
    offset = displacement(grid, x)[(slice(None), *idx)]
    half = grid.spacing / 2
    cell = box_inverse_distance(offset - half, offset + half)
    return float(np.sum(density * kernel)) * dv + float(density[idx]) * cell


def riesz_potential_map(density: FloatArray, grid: TorusGrid, mu: float) -> FloatArray:
    """riesz_integral at every grid node, by FFT convolution.

    The kernel is periodized by minimum image; at mu = 0 the centre weight is
    the exact cell integral.
    """
    check_lattices(density, grid, None)
    d = distance(grid, (0.0, 0.0, 0.0))
    dv = grid.cell_volume
    if mu > 0:
        kernel = 1.0 / np.sqrt(d * d + mu * mu)
    else:
        with np.errstate(divide="ignore"):
            kernel = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 0.0)
        kernel[0, 0, 0] = UNIT_CUBE_INVERSE_DISTANCE * grid.spacing**2 / dv
    return to_physical(to_spectral(density) * to_spectral(kernel)) * dv


def weighted_E(
    snapshot: FieldSnapshot, spec: WeightSpec, *, singular_cell: bool = True
) -> float:
    """Weighted energy int |v|^2 p dy."""
    return riesz_integral(
        _magnitude_sq(snapshot.velocity),
        snapshot.grid,
        spec.x,
        spec.mu,
        singular_cell=singular_cell,
    )


def weighted_D(
    snapshot: FieldSnapshot, spec: WeightSpec, *, singular_cell: bool = True
) -> float:
    """Weighted dissipation int |grad v|^2 p dy."""
    return riesz_integral(
        snapshot.grad_sq, snapshot.grid, spec.x, spec.mu, singular_cell=singular_cell
    )


def psi(
    u0: FloatArray, v0: FloatArray, grid: TorusGrid, x: tuple[float, float, float]
) -> float:
    """int |u0 - v0|^2 / |x - y| dy (singular-cell rule)."""
    check_lattices(u0, grid, 3)
    check_lattices(v0, grid, 3)
    return riesz_integral(_magnitude_sq(u0 - v0), grid, x, 0.0)


def mu_ladder(grid: TorusGrid) -> tuple[float, float, float]:
    h = grid.spacing
    return (4 * h, 2 * h, h)


def mu_ladder_extrapolate(mus: tuple[float, ...], values: tuple[float, ...]) -> float:
    """mu -> 0 limit of a + b mu^2 + c mu^2 log mu fitted through three points."""
    if len(mus) != 3 or len(values) != 3:
        raise RejectedInputError("ladder extrapolation needs exactly three points")
    m = np.asarray(mus, dtype=np.float64)
    if np.any(m <= 0):
        raise RejectedInputError("ladder values of mu must be positive")
    system = np.stack([np.ones(3), m * m, m * m * np.log(m)], axis=1)
    coeffs = np.linalg.solve(system, np.asarray(values, dtype=np.float64))
    return float(coeffs[0])


@dataclass(frozen=True)
class WeightedEnergyReport:
    """Weighted energy at time t and its dissipation integral, plus the mu-ladder."""

    x: tuple[float, float, float]
    t: float
    E: float
    D_integral: float
    mu_ladder: tuple[tuple[float, float, float], ...]
    E_extrapolated: float
    D_integral_extrapolated: float

    def to_dict(self) -> dict:
        return {
            "x": list(self.x),
            "t": self.t,
            "E": self.E,
            "D_integral": self.D_integral,
            "mu_ladder": [list(row) for row in self.mu_ladder],
            "E_extrapolated": self.E_extrapolated,
            "D_integral_extrapolated": self.D_integral_extrapolated,
        }


def _dissipation_integral(
    traj: Trajectory, spec: WeightSpec, upto: int
) -> float:
    values = [weighted_D(s, spec) for s in traj.snapshots[: upto + 1]]
    if upto == 0:
        return 0.0
    return float(integrate.trapezoid(values, traj.times[: upto + 1]))


def weighted_energy_report(
    traj: Trajectory, x: tuple[float, float, float], t: float | None = None
) -> WeightedEnergyReport:
    """E and int_0^t D at mu = 0 (singular cell) and along the ladder {4h, 2h, h}."""
    idx = len(traj) - 1 if t is None else traj.index_of(t)
    snap = traj.snapshots[idx]
    exact = WeightSpec(x, 0.0)
    rows = []
    for mu in mu_ladder(traj.grid):
        spec = WeightSpec(x, mu)
        rows.append((mu, weighted_E(snap, spec), _dissipation_integral(traj, spec, idx)))
    mus = tuple(r[0] for r in rows)
    return WeightedEnergyReport(
        x=tuple(float(c) for c in x),  # type: ignore[arg-type]
        t=float(snap.time),
        E=weighted_E(snap, exact),
        D_integral=_dissipation_integral(traj, exact, idx),
        mu_ladder=tuple(rows),
        E_extrapolated=mu_ladder_extrapolate(mus, tuple(r[1] for r in rows)),
        D_integral_extrapolated=mu_ladder_extrapolate(mus, tuple(r[2] for r in rows)),
    )


def weighted_energy_inequality_margin(
    traj: Trajectory, spec: WeightSpec, c: float
) -> FloatArray:
    """Per-snapshot slack of the weighted energy inequality of a regular solution.

    E(0) + c int E ||grad v||^4  -  [E(t) + int D + 3 mu^2 int int |v|^2 p^5],
    which is nonnegative for a smooth solution with an admissible c.
    """
    times = traj.times
    energy = np.array([weighted_E(s, spec) for s in traj.snapshots])
    diss = np.array([weighted_D(s, spec) for s in traj.snapshots])
    grad4 = np.array([s.dissipation**2 for s in traj.snapshots])
    if spec.mu > 0:
        d = distance(traj.grid, spec.x)
        p5 = (d * d + spec.mu**2) ** -2.5
        dv = traj.grid.cell_volume
        tail = np.array(
            [3 * spec.mu**2 * float(np.sum(_magnitude_sq(s.velocity) * p5)) * dv
             for s in traj.snapshots]
        )
    else:
        tail = np.zeros(len(traj))
    lhs = (
        energy
        + integrate.cumulative_trapezoid(diss, times, initial=0)
        + integrate.cumulative_trapezoid(tail, times, initial=0)
    )
    rhs = energy[0] + c * integrate.cumulative_trapezoid(energy * grad4, times, initial=0)
    return rhs - lhs


def _check_core(grid: TorusGrid, x: tuple[float, float, float]) -> None:
    if not grid.in_core(x, grid.box_length / 8):
        msg = f"sample point {x} is closer than box/8 to a face of the box"
        raise RejectedInputError(msg)


@dataclass(frozen=True)
class PsiTable:
    """psi^k(x) for every schedule index k (rows) and sample point (columns)."""

    points: tuple[tuple[float, float, float], ...]
    radii: tuple[float, ...]
    values: FloatArray

    def medians(self) -> FloatArray:
        return np.median(self.values, axis=1)

    def rows(self) -> list[tuple[int, int, float]]:
        """(x_index, k, psi_k) rows in x-major order."""
        return [
            (i, k, float(self.values[k, i]))
            for i in range(len(self.points))
            for k in range(len(self.radii))
        ]


def psi_sequence(
    u0: FloatArray,
    grid: TorusGrid,
    schedule: MollifierSchedule,
    sample_points: list[tuple[float, float, float]],
) -> PsiTable:
    """psi^k(x) = int |u0^k - u0|^2 / |x - y| dy over the schedule."""
    if not sample_points:
        raise RejectedInputError("psi_sequence needs at least one sample point")
    check_lattices(u0, grid, 3)
    for x in sample_points:
        _check_core(grid, x)
    values = np.zeros((len(schedule), len(sample_points)))
    for k in range(len(schedule)):
        diff = _magnitude_sq(mollify(u0, grid, schedule, k) - u0)
        for i, x in enumerate(sample_points):
            values[k, i] = riesz_integral(diff, grid, x, 0.0)
    logger.debug("psi table %d x %d computed", *values.shape)
    return PsiTable(tuple(sample_points), schedule.radii, values)


@dataclass(frozen=True)
class BallRegion:
    """Ball B(center, radius) used as the compact set of the good-set constructions."""

    center: tuple[float, float, float]
    radius: float

    @property
    def measure(self) -> float:
        return 4 / 3 * math.pi * self.radius**3

    def mask(self, grid: TorusGrid) -> FloatArray:
        if not grid.in_core(self.center, self.radius):
            msg = f"region of radius {self.radius} at {self.center} leaves the box"
            raise RejectedInputError(msg)
        return distance(grid, self.center) < self.radius


@dataclass(frozen=True)
class RatioResult:
    """A ratio of norms; ``status`` is "both_zero" for 0/0 and "unbounded" for x/0."""

    value: float
    status: Literal["ok", "both_zero", "unbounded"] = "ok"
    numerator: float = 0.0
    denominator: float = 0.0

    @property
    def defined(self) -> bool:
        return self.status == "ok"


def _ratio(num: float, den: float, zero_tol: float) -> RatioResult:
    if den <= zero_tol:
        if num <= zero_tol:
            return RatioResult(math.nan, "both_zero", num, den)
        return RatioResult(math.inf, "unbounded", num, den)
    return RatioResult(num / den, "ok", num, den)


def hls_ratio(
    u0: FloatArray,
    grid: TorusGrid,
    schedule: MollifierSchedule,
    k: int,
    region: BallRegion,
    r_exponent: float,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> RatioResult:
    """||psi^k||_{L^r(K)} / ||u0^k - u0||_2^2 on the compact ball K."""
    if not 1 <= r_exponent < 3:
        msg = f"r_exponent must lie in [1, 3), got {r_exponent}"
        raise RejectedInputError(msg)
    check_lattices(u0, grid, 3)
    inside = region.mask(grid)
    diff = _magnitude_sq(mollify(u0, grid, schedule, k) - u0)
    potential = np.maximum(riesz_potential_map(diff, grid, 0.0), 0.0)
    dv = grid.cell_volume
    num = float(np.sum(potential[inside] ** r_exponent) * dv) ** (1 / r_exponent)
    den = float(np.sum(diff)) * dv
    return _ratio(num, den, tolerances.zero_tol)


@dataclass(frozen=True)
class InterpolationExponents:
    """(r, gamma, alpha, beta, a) of the weighted interpolation inequality."""

    r: float
    gamma: float
    alpha: float
    beta: float
    a: float

    def validate(self) -> InterpolationExponents:
        r, g, al, be, a = self.r, self.gamma, self.alpha, self.beta, self.a
        if not (r >= 2 and g + 3 / r > 0 and al + 1.5 > 0 and be + 1.5 > 0 and 0.5 <= a <= 1):
            msg = (
                "need r >= 2, gamma + 3/r > 0, alpha + 3/2 > 0, beta + 3/2 > 0 "
                f"and a in [1/2, 1]; got {self.as_tuple()}"
            )
            raise ExponentConditionError(msg, "i")
        balance = a * (al + 0.5) + (1 - a) * (be + 1.5)
        if abs(g + 3 / r - balance) > 1e-12:
            msg = f"gamma + 3/r = {g + 3 / r:.12g} but the balance gives {balance:.12g}"
            raise ExponentConditionError(msg, "ii")
        low = a * (al - 1) + (1 - a) * be
        high = a * al + (1 - a) * be
        if not low - 1e-12 <= g <= high + 1e-12:
            msg = f"gamma = {g} outside [{low:.12g}, {high:.12g}]"
            raise ExponentConditionError(msg, "iii")
        return self

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.r, self.gamma, self.alpha, self.beta, self.a)


ADMISSIBLE_EXPONENTS: tuple[InterpolationExponents, ...] = (
    InterpolationExponents(4, -0.25, -0.25, -0.25, 0.75),
    InterpolationExponents(3, 0, 0, 0, 0.5),
    InterpolationExponents(6, 0, 0, 0, 1),
    InterpolationExponents(2, -1, 0, 0, 1),
    InterpolationExponents(4, 0, 0, 0, 0.75),
)


def _power_norm(
    magnitude: FloatArray, grid: TorusGrid, x: tuple[float, float, float], s: float, r: float
) -> float:
    """(int |y - x|^(s r) magnitude^r dy)^(1/r).

    The cell nearest x uses the equal-volume ball around x.
    """
    d = distance(grid, x)
    idx = grid.nearest_index(x)
    exponent = s * r
    with np.errstate(divide="ignore"):
        weight = np.where(d > 0, np.where(d > 0, d, 1.0) ** exponent, 0.0)
    weight[idx] = 0.0
    rho = grid.spacing * (3 / (4 * math.pi)) ** (1 / 3)
    dv = grid.cell_volume
    total = float(np.sum(weight * magnitude**r)) * dv
    total += float(magnitude[idx] ** r) * ball_power_integral(rho, exponent)
    return total ** (1 / r)


def interpolation_ratio(
    snapshot: FieldSnapshot,
    exponents: InterpolationExponents,
    x: tuple[float, float, float],
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> RatioResult:
    """|| |y-x|^gamma v ||_r / (|| |y-x|^alpha grad v ||_2^a || |y-x|^beta v ||_2^(1-a))."""
    e = exponents.validate()
    grid = snapshot.grid
    speed = np.sqrt(_magnitude_sq(snapshot.velocity))
    grad = np.sqrt(grad_squared(grid, snapshot.spectral_velocity))
    num = _power_norm(speed, grid, x, e.gamma, e.r)
    den = _power_norm(grad, grid, x, e.alpha, 2) ** e.a * _power_norm(
        speed, grid, x, e.beta, 2
    ) ** (1 - e.a)
    return _ratio(num, den, tolerances.zero_tol)


@dataclass(frozen=True, eq=False)
class GoodSets:
    """Good-set masks over the region's grid nodes."""

    region: BallRegion
    region_mask: FloatArray
    e_mask: FloatArray
    omega_mask: FloatArray
    k_omega: int | None
    coverage: float
    coverage_target: float
    schedule: MollifierSchedule
    psi_maps: FloatArray = field(repr=False)

    @property
    def coverage_met(self) -> bool:
        return self.k_omega is not None

    def summary(self) -> dict:
        inside = int(np.sum(self.region_mask))
        return {
            "region": {"center": list(self.region.center), "radius": self.region.radius},
            "nodes": inside,
            "e_fraction": float(np.sum(self.e_mask)) / inside if inside else 0.0,
            "omega_fraction": self.coverage,
            "coverage_target": self.coverage_target,
            "coverage_met": self.coverage_met,
            "k_omega": self.k_omega,
            "schedule_radii": list(self.schedule.radii),
        }


def good_sets(
    u0: FloatArray,
    grid: TorusGrid,
    schedule: MollifierSchedule,
    eta: float,
    region: BallRegion,
    epsilon: float,
    *,
    extend: bool = True,
) -> GoodSets:
    """E = {min_k psi^k < eta}; Omega = {psi^k < eta} at the first k reaching coverage.

    Coverage means the Omega fraction of the region's nodes is at least
    1 - epsilon / |B(R)|. When no index reaches it, the schedule is extended by
    halving until the last radius drops below half the grid spacing.
    """
    if eta <= 0:
        raise RejectedInputError(f"eta must be positive, got {eta}")
    if epsilon <= 0:
        raise RejectedInputError(f"epsilon must be positive, got {epsilon}")
    check_lattices(u0, grid, 3)
    inside = region.mask(grid)
    count = int(np.sum(inside))
    if count == 0:
        raise RejectedInputError("region contains no grid nodes")
    target = max(0.0, 1 - epsilon / region.measure)

    maps: list[FloatArray] = []

    def psi_map(k: int) -> FloatArray:
        diff = _magnitude_sq(mollify(u0, grid, schedule, k) - u0)
        return riesz_potential_map(diff, grid, 0.0)

    k_omega = None
    best_k = 0
    coverage = 0.0
    k = 0
    while True:
        while k < len(schedule):
            maps.append(psi_map(k))
            frac = float(np.sum((maps[k] < eta) & inside)) / count
            if frac > coverage:
                best_k, coverage = k, frac
            if frac >= target:
                k_omega = k
                coverage = frac
                break
            k += 1
        if k_omega is not None or not extend or schedule.radii[-1] < grid.spacing / 2:
            break
        schedule = MollifierSchedule(
            (*schedule.radii, schedule.radii[-1] / 2)
        )
        logger.debug("Extending mollifier schedule to %d radii", len(schedule))

    stack = np.stack(maps)
    e_mask = (stack.min(axis=0) < eta) & inside
    if k_omega is None:
        logger.warning(
            "Coverage not met: best Omega fraction %.4f < target %.4f", coverage, target
        )
        omega_mask = (stack[best_k] < eta) & inside
    else:
        omega_mask = (stack[k_omega] < eta) & inside
    return GoodSets(
        region, inside, e_mask, omega_mask, k_omega, coverage, target, schedule, stack
    )


def uniform_horizon(
    t_star_by_x: dict[tuple[int, int, int], float], omega_mask: FloatArray
) -> float:
    """Smallest t_star over the sampled nodes lying in the uniform good set."""
    inside = [t for idx, t in t_star_by_x.items() if omega_mask[idx]]
    if not inside:
        return 0.0
    return float(min(inside))
