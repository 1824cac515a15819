"""Global and localized energy balances of a computed trajectory.

Time integrals use the trapezoid rule with the Hermite end correction; the
integrand derivatives come from the solver right-hand side, never from
differencing snapshots.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, RangeError, RejectedInputError
from .fields import FieldSnapshot, bump, pressure_from_products
from .grid import (
    FloatArray,
    TorusGrid,
    distance,
    gradient,
    k_squared,
    to_physical,
    to_spectral,
    wavenumbers,
)
from .quadrature import hermite_trapezoid
from .solver import Trajectory, time_derivative

logger = logging.getLogger(__name__)


def _bump_derivatives(s: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
    """b, b', b'' of the bump exp(-1/(1-s^2)); all vanish for |s| >= 1."""
    s = np.asarray(s, dtype=np.float64)
    b = bump(s)
    inside = np.abs(s) < 1
    one_minus = np.where(inside, 1 - s * s, 1.0)
    q = -2 * s / one_minus**2
    dq = -2 / one_minus**2 - 8 * s * s / one_minus**3
    return b, np.where(inside, b * q, 0.0), np.where(inside, b * (q * q + dq), 0.0)


@dataclass(frozen=True)
class TestFunctionSpec:
    """Nonnegative product test function phi(tau, y) = theta(tau) chi(y).

    Both factors are unnormalized bumps exp(-1/(1-s^2)) of the scaled distance
    to ``center``. A radius of None makes that factor identically 1.
    """

    __test__ = False  # not a pytest class

    center_time: float
    center: tuple[float, float, float]
    spatial_radius: float | None
    temporal_radius: float | None

    def __post_init__(self) -> None:
        for name in ("spatial_radius", "temporal_radius"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise RejectedInputError(f"{name} must be positive, got {value}")

    def temporal(self, tau: float) -> tuple[float, float, float]:
        """theta, theta', theta'' at time tau."""
        if self.temporal_radius is None:
            return 1.0, 0.0, 0.0
        rt = self.temporal_radius
        b, db, ddb = _bump_derivatives(np.array((tau - self.center_time) / rt))
        return float(b), float(db) / rt, float(ddb) / rt**2

    def check_support(self, grid: TorusGrid) -> None:
        if self.spatial_radius is None:
            return
        if not grid.in_core(self.center, self.spatial_radius):
            msg = (
                f"test function of radius {self.spatial_radius} at {self.center} "
                f"leaks outside the box of side {grid.box_length}"
            )
            raise PreconditionError(msg)

    def spatial(self, grid: TorusGrid) -> tuple[FloatArray, FloatArray, FloatArray]:
        """chi, grad chi (3, n, n, n) and Lap chi on the grid.

        The derivatives are spectral derivatives of the sampled profile, the
        same operators the solver applies to u, so summation by parts against
        the velocity holds on the grid.
        """
        rs = self.spatial_radius
        if rs is None:
            raise PreconditionError("spatially constant test function has no profile")
        chi = bump(distance(grid, self.center) / rs)
        chi_hat = to_spectral(chi)
        grad = to_physical(1j * wavenumbers(grid) * chi_hat)
        lap = to_physical(-k_squared(grid) * chi_hat)
        return chi, grad, lap


def strong_energy_residual(traj: Trajectory, s: float, t: float) -> float:
    """||u(t)||^2 + 2 int_s^t ||grad u||^2 - ||u(s)||^2 over ledger nodes."""
    if not s < t:
        raise RangeError(f"need s < t, got s={s}, t={t}")
    ledger = traj.ledger
    i = ledger.index_of(s)
    j = ledger.index_of(t)
    dissipation = hermite_trapezoid(
        ledger.times[i : j + 1],
        ledger.enstrophy[i : j + 1],
        ledger.enstrophy_rate[i : j + 1],
    )
    lhs = ledger.energy[j] + 2 * dissipation
    return float(lhs - ledger.energy[i])


@dataclass(frozen=True)
class _SliceTerms:
    """Spatial integrals of one snapshot entering the local balance."""

    grad_sq: float  # int |grad u|^2 chi
    energy: float  # int |u|^2 chi
    lap: float  # int |u|^2 Lap chi
    flux: float  # int (|u|^2 + 2 pi) u . grad chi
    grad_rate: float  # int grad u : grad u_t chi
    energy_rate: float  # int u . u_t chi
    lap_rate: float  # int u . u_t Lap chi
    flux_rate: float  # d/dt of flux


def _slice_terms(
    snap: FieldSnapshot, phi: TestFunctionSpec, dealias: float
) -> _SliceTerms:
    grid = snap.grid
    ut_hat = time_derivative(grid, snap.spectral_velocity, dealias)
    chi, grad_chi, lap_chi = phi.spatial(grid)
    dv = grid.cell_volume
    u = snap.velocity
    ut = to_physical(ut_hat)
    pi = snap.pressure
    pi_t = 2 * pressure_from_products(grid, u, ut)
    g = gradient(grid, snap.spectral_velocity)
    gt = gradient(grid, ut_hat)
    u2 = np.einsum("i...,i...->...", u, u)
    u_ut = np.einsum("i...,i...->...", u, ut)
    u_grad_chi = np.einsum("i...,i...->...", u, grad_chi)
    ut_grad_chi = np.einsum("i...,i...->...", ut, grad_chi)
    return _SliceTerms(
        grad_sq=float(np.sum(np.einsum("ij...,ij...->...", g, g) * chi)) * dv,
        energy=float(np.sum(u2 * chi)) * dv,
        lap=float(np.sum(u2 * lap_chi)) * dv,
        flux=float(np.sum((u2 + 2 * pi) * u_grad_chi)) * dv,
        grad_rate=float(np.sum(np.einsum("ij...,ij...->...", g, gt) * chi)) * dv,
        energy_rate=float(np.sum(u_ut * chi)) * dv,
        lap_rate=float(np.sum(u_ut * lap_chi)) * dv,
        flux_rate=float(
            np.sum((2 * u_ut + 2 * pi_t) * u_grad_chi + (u2 + 2 * pi) * ut_grad_chi)
        )
        * dv,
    )


@dataclass(frozen=True)
class LocalEnergyBalance:
    lhs: float
    rhs: float

    @property
    def residual(self) -> float:
        return self.lhs - self.rhs


def _ledger_balance(
    traj: Trajectory, phi: TestFunctionSpec, sigma: float, t: float
) -> LocalEnergyBalance:
    """Spatially flat test function: the global terms at every ledger node.

    The cubic, pressure and Laplacian terms vanish; dE/dt = -2 ||grad u||^2
    supplies the derivative of theta' E.
    """
    ledger = traj.ledger
    i = ledger.index_of(sigma)
    j = ledger.index_of(t)
    times = ledger.times[i : j + 1]
    energy = ledger.energy[i : j + 1]
    enst = ledger.enstrophy[i : j + 1]
    rate = ledger.enstrophy_rate[i : j + 1]
    th, dth, ddth = np.array([phi.temporal(float(s)) for s in times]).T
    g_lhs = 2 * th * enst
    dg_lhs = 2 * dth * enst + 2 * th * rate
    g_rhs = dth * energy
    dg_rhs = ddth * energy - 2 * dth * enst
    lhs = th[-1] * energy[-1] + hermite_trapezoid(times, g_lhs, dg_lhs)
    rhs = th[0] * energy[0] + hermite_trapezoid(times, g_rhs, dg_rhs)
    return LocalEnergyBalance(float(lhs), float(rhs))


def local_energy_balance(
    traj: Trajectory, phi: TestFunctionSpec, sigma: float, t: float
) -> LocalEnergyBalance:
    """Both sides of the localized energy inequality between snapshot times.

    lhs = int |u(t)|^2 phi(t) + 2 int_sigma^t int |grad u|^2 phi
    rhs = int |u(sigma)|^2 phi(sigma)
          + int_sigma^t int |u|^2 (phi_t + Lap phi) + (|u|^2 + 2 pi) u . grad phi

    A spatially flat phi is integrated over the ledger nodes, like
    strong_energy_residual, so sigma and t need only be ledger times.
    """
    if not sigma < t:
        raise RangeError(f"need sigma < t, got sigma={sigma}, t={t}")
    if phi.spatial_radius is None:
        return _ledger_balance(traj, phi, sigma, t)
    phi.check_support(traj.grid)
    i = traj.index_of(sigma)
    j = traj.index_of(t)
    times = traj.times[i : j + 1]
    g_lhs, dg_lhs, g_rhs, dg_rhs = [], [], [], []
    terms = []
    for snap in traj.snapshots[i : j + 1]:
        th, dth, ddth = phi.temporal(snap.time)
        st = _slice_terms(snap, phi, traj.dealias)
        terms.append((th, st))
        g_lhs.append(2 * th * st.grad_sq)
        dg_lhs.append(2 * dth * st.grad_sq + 4 * th * st.grad_rate)
        g_rhs.append(dth * st.energy + th * st.lap + th * st.flux)
        dg_rhs.append(
            ddth * st.energy
            + 2 * dth * st.energy_rate
            + dth * st.lap
            + 2 * th * st.lap_rate
            + dth * st.flux
            + th * st.flux_rate
        )
    th_t, end = terms[-1]
    th_s, start = terms[0]
    lhs = th_t * end.energy + hermite_trapezoid(times, g_lhs, dg_lhs)
    rhs = th_s * start.energy + hermite_trapezoid(times, g_rhs, dg_rhs)
    logger.debug("Local balance on [%.4f, %.4f]: lhs=%.6e rhs=%.6e", sigma, t, lhs, rhs)
    return LocalEnergyBalance(float(lhs), float(rhs))


def local_energy_residual(
    traj: Trajectory, phi: TestFunctionSpec, sigma: float, t: float
) -> float:
    """LHS - RHS of the localized energy inequality (<= 0 up to discretization)."""
    return local_energy_balance(traj, phi, sigma, t).residual
