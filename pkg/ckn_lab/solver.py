"""Pseudo-spectral Navier-Stokes integration with unit viscosity.

The nonlinearity is taken in rotational form, u x omega, with the 2/3 rule applied
to both factors and to the product; the viscous term is integrated exactly by an
integrating factor inside classical RK4.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_TOLERANCES, SolverConfig, Tolerances
from .errors import BlowUpError, RangeError, RejectedInputError, StepRejectedError
from .fields import (
    FieldSnapshot,
    enstrophy,
    enstrophy_rate,
    kinetic_energy,
    leray_project_spectral,
)
from .grid import (
    ComplexArray,
    FloatArray,
    TorusGrid,
    check_lattices,
    curl_spectral,
    dealias_mask,
    k_squared,
    to_physical,
    to_spectral,
)

logger = logging.getLogger(__name__)


def _readonly(values: list[float] | FloatArray) -> FloatArray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EnergyLedger:
    """Per-step energy bookkeeping: E, ||grad u||^2 and its time derivative."""

    times: FloatArray
    energy: FloatArray
    enstrophy: FloatArray
    enstrophy_rate: FloatArray

    def __len__(self) -> int:
        return len(self.times)

    def index_of(self, t: float) -> int:
        """Index of the ledger node at time ``t``; RangeError if there is none."""
        slack = 1e-9 * max(1.0, abs(t))
        if len(self.times) == 0 or t < self.times[0] - slack or t > self.times[-1] + slack:
            msg = f"time {t} outside ledger range"
            raise RangeError(msg)
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > slack:
            msg = f"time {t} is not a ledger node (nearest {self.times[i]})"
            raise RangeError(msg)
        return i

    def rescaled(self, lam: float) -> EnergyLedger:
        return EnergyLedger(
            _readonly(self.times / lam**2),
            _readonly(self.energy / lam),
            _readonly(self.enstrophy * lam),
            _readonly(self.enstrophy_rate * lam**3),
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots in increasing time plus the per-step energy ledger."""

    snapshots: tuple[FieldSnapshot, ...]
    ledger: EnergyLedger
    dealias: float = 2 / 3
    viscosity: float = 1.0
    trajectory_id: str = ""
    times: FloatArray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.snapshots:
            raise RejectedInputError("trajectory needs at least one snapshot")
        times = _readonly([s.time for s in self.snapshots])
        if np.any(np.diff(times) <= 0):
            raise RejectedInputError("snapshot times must be strictly increasing")
        grid = self.snapshots[0].grid
        if any(s.grid != grid for s in self.snapshots):
            raise RejectedInputError("all snapshots must share one grid")
        if not all(math.isfinite(s.energy) for s in self.snapshots):
            raise RejectedInputError("snapshot energy must be finite")
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def grid(self) -> TorusGrid:
        return self.snapshots[0].grid

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def index_of(self, t: float) -> int:
        slack = 1e-9 * max(1.0, abs(t))
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > slack:
            msg = f"time {t} is not a snapshot time"
            raise RangeError(msg)
        return i

    def snapshot_at(self, t: float) -> FieldSnapshot:
        return self.snapshots[self.index_of(t)]

    def indices_between(self, a: float, b: float) -> list[int]:
        """Snapshot indices with a <= t <= b (closed, with roundoff slack)."""
        slack = 1e-12 * max(1.0, abs(b))
        return [i for i, t in enumerate(self.times) if a - slack <= t <= b + slack]

    def rescaled(self, lam: float) -> Trajectory:
        """u -> lam u(lam^2 t, lam x), pi -> lam^2 pi on the box of side L / lam."""
        if lam <= 0:
            raise RejectedInputError(f"scaling factor must be positive, got {lam}")
        grid = self.grid.rescaled(lam)
        snapshots = tuple(
            FieldSnapshot.from_spectral(
                grid,
                lam * s.spectral_velocity,
                s.time / lam**2,
                lam**2 * s.pressure,
                validate=False,
            )
            for s in self.snapshots
        )
        return Trajectory(
            snapshots,
            self.ledger.rescaled(lam),
            self.dealias,
            self.viscosity,
            self.trajectory_id,
        )


def nonlinear_term(grid: TorusGrid, u_hat: ComplexArray, dealias: float) -> ComplexArray:
    """Projected, dealiased Fourier coefficients of u x omega."""
    mask = dealias_mask(grid, dealias)
    truncated = u_hat * mask
    u = to_physical(truncated)
    omega = to_physical(curl_spectral(grid, truncated))
    return leray_project_spectral(grid, mask * to_spectral(np.cross(u, omega, axis=0)))


def time_derivative(
    grid: TorusGrid, u_hat: ComplexArray, dealias: float, *, nonlinear: bool = True
) -> ComplexArray:
    """Right-hand side du_hat/dt = -|k|^2 u_hat + N(u_hat)."""
    rhs = -k_squared(grid) * u_hat
    if nonlinear:
        rhs = rhs + nonlinear_term(grid, u_hat, dealias)
    return rhs


def _check_cfl(grid: TorusGrid, u_hat: ComplexArray, cfg: SolverConfig, t: float) -> None:
    u = to_physical(u_hat)
    max_speed = float(np.sqrt(np.max(np.sum(u * u, axis=0))))
    if cfg.dt * max_speed > cfg.cfl_cap * grid.spacing:
        msg = (
            f"CFL violated at t={t:.6g}: dt={cfg.dt:g}, max|u|={max_speed:.4g}, "
            f"limit {cfg.cfl_cap * grid.spacing / max_speed:.4g}"
        )
        raise StepRejectedError(msg, max_speed)


def _advance(
    grid: TorusGrid,
    u_hat: ComplexArray,
    k1: ComplexArray,
    cfg: SolverConfig,
    nonlinear: bool,
) -> ComplexArray:
    """One integrating-factor RK4 step given the stage-1 nonlinear term."""
    dt = cfg.dt
    k2_full = k_squared(grid)
    e_full = np.exp(-k2_full * dt)
    e_half = np.exp(-k2_full * dt / 2)

    def n(v: ComplexArray) -> ComplexArray:
        if not nonlinear:
            return np.zeros_like(v)
        return nonlinear_term(grid, v, cfg.dealias)

    k2 = n(e_half * (u_hat + dt / 2 * k1))
    k3 = n(e_half * u_hat + dt / 2 * k2)
    k4 = n(e_full * u_hat + dt * e_half * k3)
    return e_full * u_hat + dt / 6 * (e_full * k1 + 2 * e_half * (k2 + k3) + k4)


def _check_config(cfg: SolverConfig) -> None:
    if cfg.dt <= 0 or cfg.t_end <= 0 or cfg.cfl_cap <= 0:
        raise RejectedInputError("dt, t_end and cfl_cap must be positive")
    if not 0 < cfg.dealias <= 1:
        raise RejectedInputError(f"dealias must lie in (0, 1], got {cfg.dealias}")
    if cfg.snapshot_stride < 1:
        raise RejectedInputError("snapshot_stride must be a positive integer")
    if cfg.steps < 1:
        raise RejectedInputError("t_end must cover at least one step")


def step(
    state: FieldSnapshot,
    cfg: SolverConfig,
    *,
    nonlinear: bool = True,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> FieldSnapshot:
    """Advance one snapshot by cfg.dt; the pressure is recomputed."""
    _check_config(cfg)
    grid = state.grid
    _check_cfl(grid, state.spectral_velocity, cfg, state.time)
    if nonlinear:
        k1 = nonlinear_term(grid, state.spectral_velocity, cfg.dealias)
    else:
        k1 = np.zeros_like(state.spectral_velocity)
    u_hat = _advance(grid, state.spectral_velocity, k1, cfg, nonlinear)
    if not np.all(np.isfinite(u_hat)):
        msg = f"non-finite velocity after step from t={state.time:.6g}"
        raise BlowUpError(msg, state.time)
    return FieldSnapshot.from_spectral(
        grid, u_hat, state.time + cfg.dt, tolerances=tolerances
    )


def _integrate(
    start: FieldSnapshot,
    first_step: int,
    cfg: SolverConfig,
    nonlinear: bool,
    tolerances: Tolerances,
) -> Trajectory:
    grid = start.grid
    total = cfg.steps
    u_hat = np.array(start.spectral_velocity)
    t = start.time
    snapshots = [start]
    times: list[float] = []
    energy: list[float] = []
    enst: list[float] = []
    rate: list[float] = []

    def record(t: float, u_hat: ComplexArray, k1: ComplexArray) -> None:
        ut_hat = -k_squared(grid) * u_hat + k1
        times.append(t)
        energy.append(kinetic_energy(grid, u_hat))
        enst.append(enstrophy(grid, u_hat))
        rate.append(enstrophy_rate(grid, u_hat, ut_hat))

    def partial() -> Trajectory:
        return Trajectory(
            tuple(snapshots),
            EnergyLedger(_readonly(times), _readonly(energy), _readonly(enst), _readonly(rate)),
            cfg.dealias,
        )

    def stage_one(v: ComplexArray) -> ComplexArray:
        if nonlinear:
            return nonlinear_term(grid, v, cfg.dealias)
        return np.zeros_like(v)

    logger.info(
        "Integrating %d^3 from t=%.4f, steps %d..%d, dt=%g",
        grid.n_per_axis,
        t,
        first_step,
        total,
        cfg.dt,
    )
    for n in range(first_step, total):
        try:
            _check_cfl(grid, u_hat, cfg, t)
        except StepRejectedError as exc:
            exc.partial = partial()
            raise
        k1 = stage_one(u_hat)
        record(t, u_hat, k1)
        new_hat = _advance(grid, u_hat, k1, cfg, nonlinear)
        if not np.all(np.isfinite(new_hat)):
            msg = f"non-finite velocity after step {n + 1} from t={t:.6g}"
            raise BlowUpError(msg, t, partial())
        u_hat = new_hat
        t = t + cfg.dt
        if (n + 1) % cfg.snapshot_stride == 0 or n + 1 == total:
            snapshots.append(
                FieldSnapshot.from_spectral(grid, u_hat, t, tolerances=tolerances)
            )
            logger.debug("Snapshot %d at t=%.6f", len(snapshots) - 1, t)
    record(t, u_hat, stage_one(u_hat))
    traj = partial()
    logger.info("Run finished at t=%.4f with %d snapshots", t, len(snapshots))
    return traj


def run(
    u0: FloatArray,
    grid: TorusGrid,
    cfg: SolverConfig,
    *,
    nonlinear: bool = True,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> Trajectory:
    """Integrate from t = 0 to cfg.t_end.

    The data is Leray-projected first. On failure the raised SolverError
    carries the partial trajectory in ``partial``.
    """
    _check_config(cfg)
    check_lattices(u0, grid, 3)
    u_hat = leray_project_spectral(grid, to_spectral(u0))
    start = FieldSnapshot.from_spectral(grid, u_hat, 0.0, tolerances=tolerances)
    return _integrate(start, 0, cfg, nonlinear, tolerances)


def resume(
    snapshot: FieldSnapshot,
    cfg: SolverConfig,
    *,
    nonlinear: bool = True,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> Trajectory:
    """Continue a run from one of its in-memory snapshots.

    The step index is recovered from the snapshot time, so the returned tail
    matches the original run bit for bit. The tail starts at the snapshot
    time rather than at 0; it serves comparison runs restarted mid-run.
    """
    _check_config(cfg)
    first = int(round(snapshot.time / cfg.dt))
    if first >= cfg.steps:
        msg = f"snapshot at t={snapshot.time} is already at or past t_end"
        raise RangeError(msg)
    return _integrate(snapshot, first, cfg, nonlinear, tolerances)


def regular_solution_horizon(
    u0: FloatArray, grid: TorusGrid, constant: float = 1.0
) -> float:
    """Existence time scale c ||grad u0||_2^-4 of the smooth solution."""
    check_lattices(u0, grid, 3)
    grad = enstrophy(grid, to_spectral(u0))
    if grad == 0:
        return math.inf
    return constant / grad**2
