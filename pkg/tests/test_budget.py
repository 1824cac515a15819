"""Tests for the perturbation budget and the t_star scan."""

import numpy as np
import pytest

from ckn_lab.budget import (
    estimate_t_star,
    threshold,
    weighted_budget,
    weighted_quantity_series,
    working_bound,
)
from ckn_lab.config import SolverConfig
from ckn_lab.errors import RejectedInputError
from ckn_lab.initial_data import divergence_free_bump, taylor_green
from ckn_lab.solver import resume, run

TIMES = np.array([0.0, 0.1, 0.2, 0.3])
ZEROS = np.zeros(4)


class TestThresholds:
    def test_values(self):
        assert threshold(1.0) == pytest.approx(1 / 16)
        assert working_bound(1.0) == pytest.approx(1 / 8)
        assert threshold(2.0) == pytest.approx(1 / 64)


class TestEstimateTStar:
    def test_zero_perturbation_runs_to_end(self):
        result = estimate_t_star(TIMES, ZEROS, ZEROS, ZEROS, 1.0)
        assert result.certified
        assert result.t_star == 0.3

    def test_initial_energy_above_threshold(self):
        energy = np.array([0.1, 0.0, 0.0, 0.0])
        result = estimate_t_star(TIMES, energy, ZEROS, ZEROS, 1.0)
        assert not result.certified
        assert result.t_star == 0.0
        assert "no certificate" in result.reason

    def test_stops_at_first_violation(self):
        h_term = np.array([0.0, 0.01, 0.07, 0.0])
        result = estimate_t_star(TIMES, ZEROS, ZEROS, h_term, 1.0)
        assert result.certified
        assert result.t_star == 0.1
        assert result.violation_time == 0.2

    def test_dissipation_counts_half(self):
        diss = np.array([0.0, 0.2, 0.26, 0.3])
        result = estimate_t_star(TIMES, ZEROS, diss, ZEROS, 1.0)
        assert result.t_star == 0.1


class TestWeightedBudget:
    def test_identical_runs(self, tg_traj):
        budget = weighted_budget(tg_traj, tg_traj, tg_traj.grid.center, 0.0, 1.0)
        assert np.all(budget.w_energy == 0)
        assert budget.hp_holds
        assert budget.t_star.certified
        assert budget.t_star.t_star == tg_traj.end
        assert budget.flags()["hpn_all"]

    def test_sampling_mismatch(self, tg_traj, zero_traj):
        with pytest.raises(RejectedInputError, match="different"):
            weighted_budget(tg_traj, zero_traj, tg_traj.grid.center, 0.0, 1.0)

    def test_rejects_nonpositive_constant(self, tg_traj):
        with pytest.raises(RejectedInputError, match="mass constant"):
            weighted_budget(tg_traj, tg_traj, tg_traj.grid.center, 0.0, 0.0)

    def test_comparison_started_at_sigma(self, tg_traj):
        cfg = SolverConfig(dt=4e-3, t_end=0.4, snapshot_stride=5)
        v_traj = resume(tg_traj.snapshot_at(0.2), cfg)
        budget = weighted_budget(tg_traj, v_traj, tg_traj.grid.center, 0.0, 1.0, sigma=0.2)
        assert budget.sigma == 0.2
        assert budget.times[0] == pytest.approx(0.0, abs=1e-12)
        assert len(budget.times) == len(v_traj)
        assert np.all(budget.w_energy == 0)
        assert budget.t_star.certified
        assert budget.t_star.t_star == pytest.approx(tg_traj.end - 0.2)

    def test_sigma_must_be_a_snapshot_time(self, tg_traj):
        with pytest.raises(RejectedInputError, match="sigma"):
            weighted_budget(tg_traj, tg_traj, tg_traj.grid.center, 0.0, 1.0, sigma=0.21)

    def test_t_star_grows_as_bump_shrinks(self, grid16):
        cfg = SolverConfig(dt=5e-3, t_end=0.2, snapshot_stride=5)
        v0 = taylor_green(grid16, 0.05)
        v_traj = run(v0, grid16, cfg)
        t_stars = []
        for amplitude in (1e-2, 1e-3, 1e-4):
            bump = divergence_free_bump(grid16, grid16.center, 0.6, amplitude)
            u_traj = run(v0 + bump, grid16, cfg)
            budget = weighted_budget(u_traj, v_traj, grid16.center, 0.0, 1.0)
            assert budget.t_star.t_star > 0
            t_stars.append(budget.t_star.t_star)
        assert t_stars == sorted(t_stars)


class TestQuantitySeries:
    def test_one_value_per_snapshot(self, tg_traj):
        energy, diss = weighted_quantity_series(tg_traj, tg_traj.grid.center)
        assert energy.shape == diss.shape == (len(tg_traj),)
        assert np.all(np.diff(energy) < 0)
