"""Shared trajectories: small runs reused across test modules."""

import math

import numpy as np
import pytest

from ckn_lab.config import SolverConfig
from ckn_lab.fields import FieldSnapshot
from ckn_lab.grid import TorusGrid
from ckn_lab.initial_data import taylor_green
from ckn_lab.solver import EnergyLedger, Trajectory, run


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    """Keep CKN_* variables from the host out of every test."""
    monkeypatch.delenv("CKN_OUT_DIR", raising=False)
    monkeypatch.delenv("CKN_THREADS", raising=False)


@pytest.fixture(scope="session")
def grid16():
    return TorusGrid(16, 2 * math.pi)


@pytest.fixture(scope="session")
def zero_traj(grid16):
    """Zero data, t in [0, 0.1], a snapshot every 0.02."""
    cfg = SolverConfig(dt=0.01, t_end=0.1, snapshot_stride=2)
    return run(np.zeros((3, *grid16.shape)), grid16, cfg)


@pytest.fixture(scope="session")
def tg_traj(grid16):
    """Low-amplitude Taylor-Green, t in [0, 0.4], a snapshot every 0.02."""
    cfg = SolverConfig(dt=4e-3, t_end=0.4, snapshot_stride=5)
    return run(taylor_green(grid16, 0.05), grid16, cfg)


@pytest.fixture(scope="session")
def fine_traj():
    """Taylor-Green on a box of side pi (spacing pi/16), for gradient cylinders."""
    grid = TorusGrid(16, math.pi)
    cfg = SolverConfig(dt=4e-3, t_end=0.4, snapshot_stride=5)
    return run(taylor_green(grid, 0.05), grid, cfg)


def _constant_trajectory(grid, value, times):
    """u = (value, 0, 0) and pi = 0 at every time (not a solution; fixture only)."""
    velocity = np.zeros((3, *grid.shape))
    velocity[0] = value
    snaps = tuple(
        FieldSnapshot.from_velocity(
            grid, velocity, t, np.zeros(grid.shape), validate=False
        )
        for t in times
    )
    zeros = np.zeros(len(times))
    ledger = EnergyLedger(np.array(times, dtype=float), zeros, zeros, zeros)
    return Trajectory(snaps, ledger)


@pytest.fixture()
def constant_trajectory():
    """Builder for spatially constant trajectories."""
    return _constant_trajectory
