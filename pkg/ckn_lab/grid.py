"""Periodic grid and spectral primitives.

Lattices are numpy arrays indexed ``[i, j, k]`` for the x, y, z axes; vector
fields carry a leading component axis, shape ``(3, n, n, n)``. Transforms are
the unnormalized ``scipy.fft.fftn`` / normalized ``ifftn`` pair over the last
three axes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.fft
from cachetools import LRUCache, cached
from numpy.typing import NDArray

from .errors import RejectedInputError

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]

SPATIAL_AXES = (-3, -2, -1)


@dataclass(frozen=True)
class TorusGrid:
    """Periodic box [0, L)^3 sampled at ``n_per_axis`` nodes per axis."""

    n_per_axis: int
    box_length: float

    def __post_init__(self) -> None:
        if self.n_per_axis < 8 or self.n_per_axis % 2:
            msg = f"n_per_axis must be even and >= 8, got {self.n_per_axis}"
            raise RejectedInputError(msg)
        if not self.box_length > 0:
            msg = f"box_length must be positive, got {self.box_length}"
            raise RejectedInputError(msg)

    @property
    def spacing(self) -> float:
        return self.box_length / self.n_per_axis

    @property
    def shape(self) -> tuple[int, int, int]:
        n = self.n_per_axis
        return (n, n, n)

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @property
    def center(self) -> tuple[float, float, float]:
        half = self.box_length / 2
        return (half, half, half)

    @property
    def volume(self) -> float:
        return self.box_length**3

    def axis(self) -> FloatArray:
        """Node coordinates along one axis."""
        return np.arange(self.n_per_axis) * self.spacing

    def node(self, index: tuple[int, int, int]) -> tuple[float, float, float]:
        h = self.spacing
        return (index[0] * h, index[1] * h, index[2] * h)

    def nearest_index(self, x: tuple[float, float, float]) -> tuple[int, int, int]:
        n = self.n_per_axis
        i, j, k = (int(np.rint(c / self.spacing)) % n for c in x)
        return (i, j, k)

    def rescaled(self, lam: float) -> TorusGrid:
        """Same resolution on the box of side L / lam."""
        return TorusGrid(self.n_per_axis, self.box_length / lam)

    def in_core(self, x: tuple[float, float, float], margin: float) -> bool:
        """True when x keeps at least ``margin`` from every box face."""
        return all(margin <= c <= self.box_length - margin for c in x)


def displacement(grid: TorusGrid, x: tuple[float, float, float]) -> FloatArray:
    """Minimum-image displacement y - x for every node y, shape (3, n, n, n)."""
    return _displacement(grid, tuple(float(c) for c in x))


@cached(cache=LRUCache(maxsize=32))
def _displacement(grid: TorusGrid, x: tuple[float, float, float]) -> FloatArray:
    length = grid.box_length
    axis = grid.axis()
    parts = []
    for dim, c in enumerate(x):
        d = np.mod(axis - c + length / 2, length) - length / 2
        shape = [1, 1, 1]
        shape[dim] = grid.n_per_axis
        parts.append(np.broadcast_to(d.reshape(shape), grid.shape))
    out = np.stack(parts)
    out.setflags(write=False)
    return out


def distance(grid: TorusGrid, x: tuple[float, float, float]) -> FloatArray:
    """Minimum-image distance |y - x| at every node."""
    d = displacement(grid, x)
    return np.sqrt(np.einsum("i...,i...->...", d, d))


@cached(cache=LRUCache(maxsize=16))
def mode_indices(grid: TorusGrid) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Signed integer mode numbers per axis, broadcastable to the grid."""
    n = grid.n_per_axis
    m = scipy.fft.fftfreq(n, d=1.0 / n)
    out = (m.reshape(n, 1, 1), m.reshape(1, n, 1), m.reshape(1, 1, n))
    for arr in out:
        arr.setflags(write=False)
    return out


@cached(cache=LRUCache(maxsize=16))
def wavenumbers(grid: TorusGrid) -> FloatArray:
    """Derivative wavenumbers (3, n, n, n) with the Nyquist mode zeroed.

    Zeroing the unpaired Nyquist mode keeps every first derivative of a real
    field real.
    """
    n = grid.n_per_axis
    scale = 2 * np.pi / grid.box_length
    k = []
    for m in mode_indices(grid):
        kk = np.where(np.abs(m) == n // 2, 0.0, m) * scale
        k.append(np.broadcast_to(kk, grid.shape))
    out = np.stack(k).astype(np.float64)
    out.setflags(write=False)
    return out


@cached(cache=LRUCache(maxsize=16))
def k_squared(grid: TorusGrid) -> FloatArray:
    """Full |k|^2 including the Nyquist planes (used by the Laplacian)."""
    scale = 2 * np.pi / grid.box_length
    mx, my, mz = mode_indices(grid)
    out = ((mx**2 + my**2 + mz**2) * scale**2).astype(np.float64)
    out.setflags(write=False)
    return out


@cached(cache=LRUCache(maxsize=16))
def dealias_mask(grid: TorusGrid, fraction: float) -> NDArray[np.bool_]:
    """Modes kept by the dealiasing rule: |m_i| < fraction * n / 2 on every axis."""
    cutoff = fraction * grid.n_per_axis / 2
    mx, my, mz = mode_indices(grid)
    out = (np.abs(mx) < cutoff) & (np.abs(my) < cutoff) & (np.abs(mz) < cutoff)
    out.setflags(write=False)
    return out


def check_lattices(arr: NDArray, grid: TorusGrid, components: int | None) -> None:
    """Raise RejectedInputError unless ``arr`` matches the grid (and components)."""
    expected = grid.shape if components is None else (components, *grid.shape)
    if arr.shape != expected:
        msg = f"lattice shape {arr.shape} does not match grid shape {expected}"
        raise RejectedInputError(msg)


def to_spectral(values: NDArray) -> ComplexArray:
    return scipy.fft.fftn(values, axes=SPATIAL_AXES)


def to_physical(coeffs: ComplexArray) -> FloatArray:
    return scipy.fft.ifftn(coeffs, axes=SPATIAL_AXES).real


def gradient(grid: TorusGrid, u_hat: ComplexArray) -> FloatArray:
    """Physical velocity gradient, ``out[i, j] = d_j u_i``, shape (3, 3, n, n, n)."""
    k = wavenumbers(grid)
    return to_physical(1j * k[np.newaxis, :] * u_hat[:, np.newaxis])


def divergence(grid: TorusGrid, u_hat: ComplexArray) -> FloatArray:
    k = wavenumbers(grid)
    return to_physical(1j * np.einsum("i...,i...->...", k, u_hat))


def curl_spectral(grid: TorusGrid, u_hat: ComplexArray) -> ComplexArray:
    kx, ky, kz = wavenumbers(grid)
    ux, uy, uz = u_hat
    return 1j * np.stack([ky * uz - kz * uy, kz * ux - kx * uz, kx * uy - ky * ux])


def grad_squared(grid: TorusGrid, u_hat: ComplexArray) -> FloatArray:
    """|grad u|^2 summed over all nine components."""
    g = gradient(grid, u_hat)
    return np.einsum("ij...,ij...->...", g, g)


def philox_generator(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; ``stream`` selects an independent substream."""
    bit_generator = np.random.Philox(seed)
    if stream:
        bit_generator = bit_generator.jumped(stream)
    return np.random.Generator(bit_generator)
