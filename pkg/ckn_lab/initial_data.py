"""Initial velocity builders."""

from __future__ import annotations

import logging

import numpy as np

from .config import RunConfig
from .errors import ConfigError
from .fields import leray_project, leray_project_spectral
from .grid import (
    FloatArray,
    TorusGrid,
    displacement,
    mode_indices,
    philox_generator,
    to_physical,
    to_spectral,
)

logger = logging.getLogger(__name__)

# Philox substreams, one per purpose.
STREAM_INITIAL = 0
STREAM_ENSEMBLE = 1


def zero_field(grid: TorusGrid) -> FloatArray:
    return np.zeros((3, *grid.shape))


def taylor_green(grid: TorusGrid, amplitude: float) -> FloatArray:
    """(A sin x cos y cos z, -A cos x sin y cos z, 0) in box-scaled coordinates."""
    scale = 2 * np.pi / grid.box_length
    x = grid.axis() * scale
    sx, cx = np.sin(x), np.cos(x)
    u = amplitude * np.einsum("i,j,k->ijk", sx, cx, cx)
    v = -amplitude * np.einsum("i,j,k->ijk", cx, sx, cx)
    return np.stack([u, v, np.zeros(grid.shape)])


def random_solenoidal_field(
    grid: TorusGrid,
    rng: np.random.Generator,
    band: int = 3,
    amplitude: float = 1.0,
) -> FloatArray:
    """Band-limited divergence-free field with rms speed ``amplitude``.

    Only modes with every |m_i| <= band are kept, so the field is resolved and
    smooth at any grid size.
    """
    raw = rng.standard_normal((3, *grid.shape))
    mx, my, mz = mode_indices(grid)
    keep = (np.abs(mx) <= band) & (np.abs(my) <= band) & (np.abs(mz) <= band)
    u_hat = leray_project_spectral(grid, to_spectral(raw) * keep)
    u = to_physical(u_hat)
    rms = float(np.sqrt(np.mean(np.sum(u * u, axis=0))))
    if rms == 0:
        return u
    return u * (amplitude / rms)


def ball_indicator(
    grid: TorusGrid,
    center: tuple[float, float, float],
    radius: float,
    supersample: int = 4,
) -> FloatArray:
    """Volume fraction of each grid cell lying inside B(center, radius).

    Cells are the boxes of side h centred on the nodes; the fraction is
    estimated from ``supersample**3`` sub-cell midpoints.
    """
    h = grid.spacing
    d = displacement(grid, center)
    offsets = (np.arange(supersample) + 0.5) / supersample - 0.5
    out = np.zeros(grid.shape)
    for ox in offsets:
        dx2 = (d[0] + ox * h) ** 2
        for oy in offsets:
            dxy2 = dx2 + (d[1] + oy * h) ** 2
            for oz in offsets:
                out += dxy2 + (d[2] + oz * h) ** 2 < radius * radius
    return out / supersample**3


def jump_field(grid: TorusGrid, radius: float, amplitude: float = 1.0) -> FloatArray:
    """Projected sharp-edged jet: a ball of x-velocity cut off at ``radius``."""
    raw = np.zeros((3, *grid.shape))
    raw[0] = amplitude * (distance_to_center(grid) < radius)
    return leray_project(raw, grid)


def distance_to_center(grid: TorusGrid) -> FloatArray:
    d = displacement(grid, grid.center)
    return np.sqrt(np.einsum("i...,i...->...", d, d))


def divergence_free_bump(
    grid: TorusGrid,
    center: tuple[float, float, float],
    width: float,
    amplitude: float,
) -> FloatArray:
    """Gaussian swirl about the z axis through ``center``, peak speed ``amplitude``.

    Built as the curl of psi * e_z with psi = exp(-|y - c|^2 / width^2), then
    projected so the discrete divergence and mean vanish.
    """
    d = displacement(grid, center)
    psi = np.exp(-np.einsum("i...,i...->...", d, d) / width**2)
    raw = np.stack(
        [-2 * d[1] / width**2 * psi, 2 * d[0] / width**2 * psi, np.zeros(grid.shape)]
    )
    u = leray_project(raw, grid)
    peak = float(np.max(np.sqrt(np.sum(u * u, axis=0))))
    if peak == 0:
        return u
    return u * (amplitude / peak)


def initial_velocity(cfg: RunConfig, grid: TorusGrid | None = None) -> FloatArray:
    """Initial velocity described by ``cfg.initial``."""
    grid = grid or TorusGrid(cfg.grid.n_per_axis, cfg.grid.box_length)
    init = cfg.initial
    if init.kind == "zero":
        u0 = zero_field(grid)
    elif init.kind == "taylor_green":
        u0 = taylor_green(grid, init.amplitude)
    elif init.kind == "random":
        rng = philox_generator(cfg.seed, STREAM_INITIAL)
        u0 = random_solenoidal_field(grid, rng, init.band, init.amplitude)
    elif init.kind == "jump":
        u0 = jump_field(grid, grid.box_length / 8, init.amplitude)
    elif init.kind == "bump":
        u0 = divergence_free_bump(grid, grid.center, init.bump_width, init.amplitude)
    else:
        raise ConfigError(f"unknown initial kind {init.kind!r}", "initial.kind")
    if init.bump_amplitude:
        u0 = u0 + divergence_free_bump(
            grid, grid.center, init.bump_width, init.bump_amplitude
        )
    logger.debug("Built %s initial data on %d^3", init.kind, grid.n_per_axis)
    return u0
