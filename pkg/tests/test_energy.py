"""Tests for the global and localized energy balances."""

import math

import numpy as np
import pytest

from ckn_lab.energy import (
    TestFunctionSpec,
    local_energy_balance,
    local_energy_residual,
    strong_energy_residual,
)
from ckn_lab.errors import PreconditionError, RangeError, RejectedInputError

CENTER = (math.pi, math.pi, math.pi)


class TestStrongEnergy:
    def test_zero_trajectory(self, zero_traj):
        assert strong_energy_residual(zero_traj, 0.0, zero_traj.end) == 0.0

    def test_smooth_run_balances(self, tg_traj):
        residual = strong_energy_residual(tg_traj, 0.0, tg_traj.end)
        assert abs(residual) / tg_traj.ledger.energy[0] <= 1e-6

    def test_subinterval(self, tg_traj):
        s, t = float(tg_traj.ledger.times[10]), float(tg_traj.ledger.times[60])
        assert abs(strong_energy_residual(tg_traj, s, t)) <= 1e-6 * tg_traj.ledger.energy[0]

    def test_reversed_interval(self, tg_traj):
        with pytest.raises(RangeError, match="s < t"):
            strong_energy_residual(tg_traj, 0.3, 0.1)

    def test_time_outside_run(self, tg_traj):
        with pytest.raises(RangeError, match="outside"):
            strong_energy_residual(tg_traj, 0.0, 1.0)


class TestTestFunctionSpec:
    def test_rejects_nonpositive_radius(self):
        with pytest.raises(RejectedInputError, match="spatial_radius"):
            TestFunctionSpec(0.0, CENTER, 0.0, None)

    def test_constant_in_time(self):
        spec = TestFunctionSpec(0.0, CENTER, 1.0, None)
        assert spec.temporal(0.7) == (1.0, 0.0, 0.0)

    def test_profile_vanishes_outside_support(self, grid16):
        chi, grad, lap = TestFunctionSpec(0.0, CENTER, 1.0, None).spatial(grid16)
        assert chi[0, 0, 0] == 0
        assert chi.max() == pytest.approx(math.exp(-1))
        assert grad.shape == (3, *grid16.shape)
        assert lap.shape == grid16.shape

    def test_derivatives_have_zero_mean(self, grid16):
        _, grad, lap = TestFunctionSpec(0.0, CENTER, 2.4, None).spatial(grid16)
        assert abs(float(np.sum(lap))) <= 1e-10
        assert np.all(np.abs(np.sum(grad, axis=(1, 2, 3))) <= 1e-10)


class TestLocalEnergy:
    def test_zero_trajectory(self, zero_traj):
        phi = TestFunctionSpec(0.05, CENTER, 1.5, 0.05)
        assert local_energy_residual(zero_traj, phi, 0.0, zero_traj.end) == 0.0

    @pytest.mark.parametrize("offset", [(0, 0, 0), (0.4, 0, 0), (-0.3, 0.3, 0)])
    def test_bump_balances_to_tolerance(self, tg_traj, offset):
        center = tuple(c + o for c, o in zip(CENTER, offset, strict=True))
        phi = TestFunctionSpec(tg_traj.end / 2, center, 2.4, None)
        balance = local_energy_balance(tg_traj, phi, 0.0, tg_traj.end)
        scale = max(abs(balance.lhs), abs(balance.rhs))
        assert scale > 0
        assert abs(balance.residual) <= 1e-4 * scale

    def test_support_leaking_out_of_box(self, tg_traj):
        phi = TestFunctionSpec(0.1, (0.5, math.pi, math.pi), 1.0, None)
        with pytest.raises(PreconditionError, match="leaks"):
            local_energy_residual(tg_traj, phi, 0.0, tg_traj.end)

    def test_constant_test_function_is_strong_energy(self, tg_traj):
        flat = TestFunctionSpec(0.0, CENTER, None, None)
        local = local_energy_residual(tg_traj, flat, 0.0, tg_traj.end)
        strong = strong_energy_residual(tg_traj, 0.0, tg_traj.end)
        assert local == pytest.approx(strong, abs=1e-12)

    def test_constant_test_function_between_ledger_nodes(self, tg_traj):
        s, t = float(tg_traj.ledger.times[3]), float(tg_traj.ledger.times[47])
        flat = TestFunctionSpec(0.0, CENTER, None, None)
        local = local_energy_residual(tg_traj, flat, s, t)
        assert local == pytest.approx(strong_energy_residual(tg_traj, s, t), abs=1e-12)

    def test_flat_in_space_time_cutoff(self, tg_traj):
        phi = TestFunctionSpec(0.2, CENTER, None, 0.2)
        residual = local_energy_residual(tg_traj, phi, 0.0, tg_traj.end)
        assert abs(residual) <= 1e-4 * tg_traj.ledger.energy[0]
