"""Quadrature rules shared by the energy ledgers, weighted integrals and cylinders."""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from .errors import RangeError

# Integral of 1/|z| over the unit cube [-1/2, 1/2]^3; scales as h^2.
UNIT_CUBE_INVERSE_DISTANCE = 3 * np.log(2 + np.sqrt(3)) - np.pi / 2


def hermite_trapezoid(
    times: ArrayLike, values: ArrayLike, derivatives: ArrayLike
) -> float:
    """Trapezoid rule with the two-point end correction, exact for cubics.

    Each interval [a, b] of width h contributes
    h/2 (g(a) + g(b)) + h^2/12 (g'(a) - g'(b)).
    """
    t = np.asarray(times, dtype=np.float64)
    g = np.asarray(values, dtype=np.float64)
    dg = np.asarray(derivatives, dtype=np.float64)
    if t.size < 2:
        return 0.0
    h = np.diff(t)
    correction = np.sum(h * h / 12 * (dg[:-1] - dg[1:]))
    return float(integrate.trapezoid(g, t) + correction)


def integrate_piecewise_linear(
    times: ArrayLike, values: ArrayLike, a: float, b: float
) -> float:
    """Exact integral over [a, b] of the linear interpolant through (times, values)."""
    t = np.asarray(times, dtype=np.float64)
    g = np.asarray(values, dtype=np.float64)
    slack = 1e-12 * max(1.0, abs(float(t[-1])))
    if a > b or a < t[0] - slack or b > t[-1] + slack:
        msg = f"interval [{a:.6g}, {b:.6g}] outside sampled range [{t[0]:.6g}, {t[-1]:.6g}]"
        raise RangeError(msg)
    a = max(a, float(t[0]))
    b = min(b, float(t[-1]))
    if b <= a:
        return 0.0
    inner = (t > a) & (t < b)
    nodes = np.concatenate([[a], t[inner], [b]])
    vals = np.interp(nodes, t, g)
    return float(integrate.trapezoid(vals, nodes))


def _antiderivative(x: NDArray, y: NDArray, z: NDArray) -> NDArray:
    """F with d^3F/dxdydz = 1/r on the closed positive octant (zero terms guarded)."""
    r = np.sqrt(x * x + y * y + z * z)
    out = np.zeros(np.broadcast(x, y, z).shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        for p, q, s in ((x, y, z), (y, x, z), (z, x, y)):
            log_term = np.where((q > 0) & (s > 0), q * s * np.log(p + r), 0.0)
            atan_term = np.where(
                p > 0, p * p / 2 * np.arctan(q * s / np.where(p > 0, p * r, 1.0)), 0.0
            )
            out = out + log_term - atan_term
    return out


def _octant_integral(a: NDArray, b: NDArray, c: NDArray) -> NDArray:
    """Integral of 1/r over [0, a] x [0, b] x [0, c] for a, b, c >= 0."""
    total = np.zeros(np.broadcast(a, b, c).shape)
    for ex in (0, 1):
        for ey in (0, 1):
            for ez in (0, 1):
                sign = (-1) ** (3 - ex - ey - ez)
                total = total + sign * _antiderivative(a * ex, b * ey, c * ez)
    return total


def _signed_corner(x: NDArray, y: NDArray, z: NDArray) -> NDArray:
    sign = np.sign(x) * np.sign(y) * np.sign(z)
    return sign * _octant_integral(np.abs(x), np.abs(y), np.abs(z))


def box_inverse_distance(lower: ArrayLike, upper: ArrayLike) -> float:
    """Exact integral of 1/|z| over the box [lower, upper] (corners relative to the pole)."""
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    total = 0.0
    for ex, x in ((1, hi[0]), (0, lo[0])):
        for ey, y in ((1, hi[1]), (0, lo[1])):
            for ez, z in ((1, hi[2]), (0, lo[2])):
                sign = (-1) ** (3 - ex - ey - ez)
                total += sign * float(_signed_corner(np.array(x), np.array(y), np.array(z)))
    return total


def ball_power_integral(radius: float, exponent: float) -> float:
    """Integral of |z|^s over the ball of the given radius (s > -3)."""
    return 4 * np.pi * radius ** (exponent + 3) / (exponent + 3)


def corner_fraction(displacement: NDArray, radius: float, spacing: float) -> NDArray:
    """Fraction of the 8 corners of each node-centred cell lying inside the ball.

    ``displacement`` has shape (3, ...) and holds node minus ball centre.
    """
    half = spacing / 2
    count = np.zeros(displacement.shape[1:])
    r2 = radius * radius
    for sx in (-half, half):
        dx2 = (displacement[0] + sx) ** 2
        for sy in (-half, half):
            dxy2 = dx2 + (displacement[1] + sy) ** 2
            for sz in (-half, half):
                count += dxy2 + (displacement[2] + sz) ** 2 < r2
    return count / 8
