"""Velocity/pressure snapshots, Leray projection, pressure and mollification."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from cachetools import LRUCache, cached
from numpy.typing import NDArray
from scipy import integrate

from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import OracleTooLargeError, PreconditionError, RejectedInputError
from .grid import (
    ComplexArray,
    FloatArray,
    TorusGrid,
    check_lattices,
    distance,
    grad_squared,
    k_squared,
    to_physical,
    to_spectral,
    wavenumbers,
)

logger = logging.getLogger(__name__)

ORACLE_CAP = 24

# Upper-triangle index pairs of the symmetric tensor u^i u^j and their weights.
_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
_PAIR_WEIGHTS = (1.0, 1.0, 1.0, 2.0, 2.0, 2.0)


def _frozen(arr: NDArray) -> NDArray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FieldSnapshot:
    """Divergence-free velocity and its pressure at one time.

    Arrays are read-only after construction, so snapshots can be shared freely
    between threads.
    """

    grid: TorusGrid
    time: float
    velocity: FloatArray
    pressure: FloatArray
    spectral_velocity: ComplexArray

    @classmethod
    def from_spectral(
        cls,
        grid: TorusGrid,
        u_hat: ComplexArray,
        time: float,
        pressure: FloatArray | None = None,
        *,
        tolerances: Tolerances = DEFAULT_TOLERANCES,
        validate: bool = True,
    ) -> FieldSnapshot:
        check_lattices(u_hat, grid, 3)
        u_hat = np.array(u_hat, dtype=np.complex128)
        velocity = to_physical(u_hat)
        if pressure is None:
            pressure = pressure_from_spectral(grid, u_hat)
        snap = cls(
            grid,
            float(time),
            _frozen(velocity),
            _frozen(np.array(pressure, dtype=np.float64)),
            _frozen(u_hat),
        )
        if validate:
            snap.validate(tolerances, check_roundtrip=False)
        return snap

    @classmethod
    def from_velocity(
        cls,
        grid: TorusGrid,
        velocity: FloatArray,
        time: float = 0.0,
        pressure: FloatArray | None = None,
        *,
        tolerances: Tolerances = DEFAULT_TOLERANCES,
        validate: bool = True,
    ) -> FieldSnapshot:
        """Build from physical lattices (e.g. read back from disk).

        With ``validate=False`` the gauge and divergence invariants are not
        enforced; used for synthetic fixtures such as constant fields.
        """
        check_lattices(velocity, grid, 3)
        velocity = np.array(velocity, dtype=np.float64)
        u_hat = to_spectral(velocity)
        if pressure is None:
            pressure = pressure_from_spectral(grid, u_hat)
        check_lattices(pressure, grid, None)
        snap = cls(
            grid,
            float(time),
            _frozen(velocity),
            _frozen(np.array(pressure, dtype=np.float64)),
            _frozen(u_hat),
        )
        if validate:
            snap.validate(tolerances)
        return snap

    def validate(
        self, tolerances: Tolerances = DEFAULT_TOLERANCES, *, check_roundtrip: bool = True
    ) -> None:
        """Check divergence, gauge and transform invariants."""
        if self.time < 0:
            msg = f"snapshot time must be nonnegative, got {self.time}"
            raise RejectedInputError(msg)
        scale = max(1.0, float(np.max(np.abs(self.velocity), initial=0.0)))
        div = float(np.max(np.abs(self.divergence)))
        if div > tolerances.div_tol * scale:
            msg = f"velocity divergence {div:.3e} exceeds div_tol {tolerances.div_tol:.1e}"
            raise PreconditionError(msg)
        means = np.abs(self.velocity.mean(axis=(1, 2, 3)))
        if np.any(means > tolerances.div_tol * scale):
            msg = f"velocity mean {means.max():.3e} is not zero"
            raise PreconditionError(msg)
        p_scale = max(1.0, float(np.max(np.abs(self.pressure), initial=0.0)))
        if abs(float(self.pressure.mean())) > tolerances.div_tol * p_scale:
            msg = "pressure mean is not zero"
            raise PreconditionError(msg)
        if check_roundtrip:
            back = to_physical(self.spectral_velocity)
            norm = float(np.linalg.norm(self.velocity))
            err = float(np.linalg.norm(back - self.velocity))
            if err > tolerances.roundtrip_tol * max(norm, 1e-300) and err > 0:
                msg = f"transform round-trip error {err:.3e} too large"
                raise PreconditionError(msg)

    @cached_property
    def divergence(self) -> FloatArray:
        k = wavenumbers(self.grid)
        return to_physical(1j * np.einsum("i...,i...->...", k, self.spectral_velocity))

    @cached_property
    def speed(self) -> FloatArray:
        """|u| at every node."""
        return np.sqrt(np.einsum("i...,i...->...", self.velocity, self.velocity))

    @cached_property
    def grad_sq(self) -> FloatArray:
        """|grad u|^2 at every node."""
        return grad_squared(self.grid, self.spectral_velocity)

    @cached_property
    def energy(self) -> float:
        return kinetic_energy(self.grid, self.spectral_velocity)

    @cached_property
    def dissipation(self) -> float:
        return enstrophy(self.grid, self.spectral_velocity)


def _parseval_factor(grid: TorusGrid) -> float:
    return grid.volume / float(grid.n_per_axis) ** 6


def kinetic_energy(grid: TorusGrid, u_hat: ComplexArray) -> float:
    """||u||_2^2 over the box."""
    return _parseval_factor(grid) * float(np.sum(np.abs(u_hat) ** 2))


def enstrophy(grid: TorusGrid, u_hat: ComplexArray) -> float:
    """||grad u||_2^2 over the box."""
    k = wavenumbers(grid)
    k2 = np.einsum("i...,i...->...", k, k)
    return _parseval_factor(grid) * float(np.sum(k2 * np.abs(u_hat) ** 2))


def enstrophy_rate(grid: TorusGrid, u_hat: ComplexArray, ut_hat: ComplexArray) -> float:
    """d/dt ||grad u||_2^2 given the time derivative of the coefficients."""
    k = wavenumbers(grid)
    k2 = np.einsum("i...,i...->...", k, k)
    inner = np.sum(k2 * (np.conj(u_hat) * ut_hat).real)
    return 2.0 * _parseval_factor(grid) * float(inner)


def leray_project_spectral(grid: TorusGrid, u_hat: ComplexArray) -> ComplexArray:
    """Mode-wise projection onto k . u_hat = 0; the mean mode is removed."""
    k = wavenumbers(grid)
    k2 = np.einsum("i...,i...->...", k, k)
    safe = np.where(k2 == 0, 1.0, k2)
    k_dot_u = np.einsum("i...,i...->...", k, u_hat)
    out = u_hat - k * (k_dot_u / safe)
    out[:, 0, 0, 0] = 0
    return out


def leray_project(raw: FloatArray, grid: TorusGrid) -> FloatArray:
    """Divergence-free, mean-free part of a vector lattice."""
    check_lattices(raw, grid, 3)
    return to_physical(leray_project_spectral(grid, to_spectral(raw)))


def pressure_from_products(
    grid: TorusGrid, a: FloatArray, b: FloatArray
) -> FloatArray:
    """Pressure of the symmetrized tensor (a^i b^j + a^j b^i) / 2.

    Solves -Lap(pi) = d_i d_j q_ij spectrally with the zero mode set to 0;
    ``a = b = u`` gives the Navier-Stokes pressure.
    """
    k = wavenumbers(grid)
    k2 = k_squared(grid)
    safe = np.where(k2 == 0, 1.0, k2)
    acc = np.zeros(grid.shape, dtype=np.complex128)
    for (i, j), weight in zip(_PAIRS, _PAIR_WEIGHTS, strict=True):
        q = 0.5 * (a[i] * b[j] + a[j] * b[i])
        acc += weight * k[i] * k[j] * to_spectral(q)
    pi_hat = -acc / safe
    pi_hat[0, 0, 0] = 0
    return to_physical(pi_hat)


def pressure_from_spectral(grid: TorusGrid, u_hat: ComplexArray) -> FloatArray:
    u = to_physical(u_hat)
    return pressure_from_products(grid, u, u)


def solve_pressure(
    velocity: FloatArray,
    grid: TorusGrid,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> FloatArray:
    """Zero-mean pressure of a divergence-free velocity."""
    check_lattices(velocity, grid, 3)
    u_hat = to_spectral(velocity)
    k = wavenumbers(grid)
    div = float(np.max(np.abs(to_physical(1j * np.einsum("i...,i...->...", k, u_hat)))))
    scale = max(1.0, float(np.max(np.abs(velocity), initial=0.0)))
    if div > tolerances.div_tol * scale:
        msg = f"solve_pressure needs a divergence-free velocity, divergence is {div:.3e}"
        raise PreconditionError(msg)
    return pressure_from_products(grid, velocity, velocity)


@cached(cache=LRUCache(maxsize=4))
def _oracle_kernels(grid: TorusGrid) -> FloatArray:
    """Second derivatives of the periodic Green function sampled on the grid.

    Evaluated by direct trigonometric summation over all modes (separable per
    axis), independently of the FFT path. Shape (6, n, n, n), ordered as _PAIRS.
    """
    n = grid.n_per_axis
    k = wavenumbers(grid)
    k2 = k_squared(grid)
    safe = np.where(k2 == 0, 1.0, k2)
    idx = np.arange(n)
    phase = np.exp(2j * np.pi * np.outer(idx, idx) / n)
    kernels = []
    for i, j in _PAIRS:
        symbol = -(k[i] * k[j]) / safe
        symbol[0, 0, 0] = 0
        g = np.einsum("abc,ax,by,cz->xyz", symbol, phase, phase, phase, optimize=True)
        kernels.append(g.real / n**3)
    out = np.stack(kernels)
    out.setflags(write=False)
    return out


def pressure_oracle(velocity: FloatArray, grid: TorusGrid) -> FloatArray:
    """Brute-force pressure: Green-function convolution at O(N^6) cost."""
    check_lattices(velocity, grid, 3)
    if grid.n_per_axis > ORACLE_CAP:
        raise OracleTooLargeError(grid.n_per_axis, ORACLE_CAP)
    kernels = _oracle_kernels(grid)
    q = np.stack(
        [w * velocity[i] * velocity[j] for (i, j), w in zip(_PAIRS, _PAIR_WEIGHTS, strict=True)]
    )
    n = grid.n_per_axis
    pressure = np.zeros(grid.shape)
    for a in range(n):
        for b in range(n):
            for c in range(n):
                shifted = np.roll(q, shift=(a, b, c), axis=(1, 2, 3))
                pressure += np.tensordot(kernels[:, a, b, c], shifted, axes=1)
    return pressure - pressure.mean()


def bump(s: NDArray) -> NDArray:
    """Unnormalized radial bump exp(-1 / (1 - s^2)) on |s| < 1, zero outside."""
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def bump_mass() -> float:
    """Integral of the unit-radius bump over R^3."""
    value, _ = integrate.quad(lambda r: 4 * np.pi * r * r * np.exp(-1 / (1 - r * r)), 0, 1)
    return float(value)


@dataclass(frozen=True)
class MollifierSchedule:
    """Decreasing mollification radii for the unit-mass bump kernel."""

    radii: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.radii:
            raise RejectedInputError("mollifier schedule needs at least one radius")
        if any(r <= 0 for r in self.radii):
            raise RejectedInputError("mollifier radii must be positive")
        if any(b >= a for a, b in zip(self.radii, self.radii[1:], strict=False)):
            raise RejectedInputError("mollifier radii must be strictly decreasing")

    def __len__(self) -> int:
        return len(self.radii)

    @classmethod
    def geometric(
        cls,
        grid: TorusGrid,
        count: int = 6,
        largest: float | None = None,
        smallest: float | None = None,
    ) -> MollifierSchedule:
        """Geometric radii from ``largest`` (L/4) down to ``smallest`` (2h)."""
        top = grid.box_length / 4 if largest is None else largest
        bottom = 2 * grid.spacing if smallest is None else smallest
        if count == 1:
            return cls((top,))
        ratio = (bottom / top) ** (1.0 / (count - 1))
        return cls(tuple(top * ratio**i for i in range(count)))

    def extended(self, extra: int) -> MollifierSchedule:
        """Continue the last geometric ratio for ``extra`` more radii."""
        ratio = self.radii[-1] / self.radii[-2] if len(self.radii) > 1 else 0.5
        radii = list(self.radii)
        for _ in range(extra):
            radii.append(radii[-1] * ratio)
        return MollifierSchedule(tuple(radii))

    def kernel_lattice(self, grid: TorusGrid, k: int) -> FloatArray:
        """Discrete kernel on the grid, normalized to unit sum (midpoint rule)."""
        if not 0 <= k < len(self.radii):
            msg = f"mollifier index {k} outside schedule of length {len(self.radii)}"
            raise IndexError(msg)
        return _kernel_lattice(grid, self.radii[k])


@cached(cache=LRUCache(maxsize=32))
def _kernel_lattice(grid: TorusGrid, radius: float) -> FloatArray:
    weights = bump(distance(grid, (0.0, 0.0, 0.0)) / radius)
    out = weights / weights.sum()
    out.setflags(write=False)
    return out


@cached(cache=LRUCache(maxsize=32))
def _multiplier(grid: TorusGrid, radius: float) -> FloatArray:
    out = to_spectral(_kernel_lattice(grid, radius)).real
    out.setflags(write=False)
    return out


def mollify(
    u0: FloatArray, grid: TorusGrid, schedule: MollifierSchedule, k: int
) -> FloatArray:
    """Convolve each component with the k-th scaled bump."""
    check_lattices(u0, grid, 3)
    schedule.kernel_lattice(grid, k)
    return to_physical(_multiplier(grid, schedule.radii[k]) * to_spectral(u0))
