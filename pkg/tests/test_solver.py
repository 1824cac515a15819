"""Tests for the pseudo-spectral integrator and trajectories."""

import math

import numpy as np
import pytest

from ckn_lab.config import SolverConfig
from ckn_lab.errors import RangeError, RejectedInputError, StepRejectedError
from ckn_lab.fields import FieldSnapshot
from ckn_lab.initial_data import taylor_green
from ckn_lab.solver import regular_solution_horizon, resume, run, step


class TestStep:
    def test_zero_stays_zero(self, grid16):
        snap = FieldSnapshot.from_velocity(grid16, np.zeros((3, *grid16.shape)))
        out = step(snap, SolverConfig(dt=0.01, t_end=0.1))
        assert np.all(out.velocity == 0)
        assert out.time == pytest.approx(0.01)

    def test_cfl_violation_reports_speed(self, grid16):
        snap = FieldSnapshot.from_velocity(grid16, taylor_green(grid16, 10.0))
        with pytest.raises(StepRejectedError, match="CFL") as exc:
            step(snap, SolverConfig(dt=0.1, t_end=1.0))
        assert exc.value.max_speed == pytest.approx(10.0, rel=0.05)

    def test_rejects_bad_dealias(self, grid16):
        snap = FieldSnapshot.from_velocity(grid16, np.zeros((3, *grid16.shape)))
        with pytest.raises(RejectedInputError, match="dealias"):
            step(snap, SolverConfig(dealias=1.5))


class TestRun:
    def test_zero_data(self, zero_traj):
        assert len(zero_traj) == 6
        assert all(np.all(s.velocity == 0) for s in zero_traj.snapshots)
        assert np.all(zero_traj.ledger.energy == 0)

    def test_snapshot_stride(self, tg_traj):
        assert len(tg_traj) == 21
        assert tg_traj.start == 0.0
        assert tg_traj.end == pytest.approx(0.4)
        assert len(tg_traj.ledger) == 101

    def test_energy_strictly_decreasing(self, tg_traj):
        energy = [s.energy for s in tg_traj.snapshots]
        assert all(b < a for a, b in zip(energy, energy[1:], strict=False))

    def test_linear_decay_is_exact(self, grid16):
        u0 = taylor_green(grid16, 1.0)
        traj = run(u0, grid16, SolverConfig(dt=0.01, t_end=0.1, snapshot_stride=5), nonlinear=False)
        e0 = traj.ledger.energy[0]
        expected = e0 * np.exp(-6 * traj.ledger.times)
        np.testing.assert_allclose(traj.ledger.energy, expected, rtol=1e-12)

    def test_cfl_failure_keeps_partial(self, grid16):
        cfg = SolverConfig(dt=0.1, t_end=1.0)
        with pytest.raises(StepRejectedError) as exc:
            run(taylor_green(grid16, 10.0), grid16, cfg)
        assert exc.value.partial is not None
        assert len(exc.value.partial) == 1

    def test_snapshots_are_divergence_free(self, tg_traj):
        assert max(np.abs(s.divergence).max() for s in tg_traj.snapshots) <= 1e-12


class TestResume:
    def test_tail_matches_original(self, grid16):
        cfg = SolverConfig(dt=4e-3, t_end=0.08, snapshot_stride=5)
        full = run(taylor_green(grid16, 0.05), grid16, cfg)
        tail = resume(full.snapshots[2], cfg)
        assert len(tail) == len(full) - 2
        assert tail.start == full.snapshots[2].time
        assert tail.end == full.end
        for a, b in zip(tail.snapshots, full.snapshots[2:], strict=True):
            assert a.time == b.time
            np.testing.assert_array_equal(a.spectral_velocity, b.spectral_velocity)

    def test_past_end_is_rejected(self, tg_traj):
        with pytest.raises(RangeError, match="past t_end"):
            resume(tg_traj.snapshots[-1], SolverConfig(dt=4e-3, t_end=0.4))


class TestTrajectory:
    def test_rescaled(self, tg_traj):
        scaled = tg_traj.rescaled(2.0)
        assert scaled.grid.box_length == pytest.approx(math.pi)
        np.testing.assert_array_equal(scaled.times, tg_traj.times / 4)
        np.testing.assert_array_equal(
            scaled.snapshots[3].velocity, 2 * tg_traj.snapshots[3].velocity
        )

    def test_rescaled_rejects_nonpositive(self, tg_traj):
        with pytest.raises(RejectedInputError, match="positive"):
            tg_traj.rescaled(0.0)

    def test_snapshot_lookup(self, tg_traj):
        t = float(tg_traj.times[4])
        assert tg_traj.snapshot_at(t) is tg_traj.snapshots[4]


class TestHorizon:
    def test_zero_data_is_unbounded(self, grid16):
        assert regular_solution_horizon(np.zeros((3, *grid16.shape)), grid16) == math.inf

    def test_taylor_green(self, grid16):
        u0 = taylor_green(grid16, 1.0)
        grad = 3 * (2 * math.pi) ** 3 / 4
        assert regular_solution_horizon(u0, grid16, 2.0) == pytest.approx(2.0 / grad**2)
