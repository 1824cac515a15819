"""Tests for cylinders, the regularity criteria and the singular covering."""

import math

import numpy as np
import pytest

from ckn_lab.config import SolverConfig
from ckn_lab.criteria import (
    InitialDataGauge,
    M_functional,
    decay_sup,
    lemma41_delta,
    parabolic_distance,
    prop1_verdict,
    prop2_limsup,
    singular_candidates,
    theorem_TI_schedule,
    thmD_region,
    weighted_data_norm,
)
from ckn_lab.cylinders import ParabolicCylinder, measured_sup, window_indices
from ckn_lab.errors import RangeError, RejectedInputError
from ckn_lab.grid import TorusGrid
from ckn_lab.initial_data import taylor_green
from ckn_lab.solver import run

CENTER = (math.pi, math.pi, math.pi)
FINE_CENTER = (math.pi / 2, math.pi / 2, math.pi / 2)
FULL_DELTA = 1023 / 1024


@pytest.fixture(scope="module")
def amplitude_runs(grid16):
    """Taylor-Green at amplitudes 0.05 lam, lam = 1, 2, 4, on the tg_traj time grid."""
    cfg = SolverConfig(dt=4e-3, t_end=0.4, snapshot_stride=5)
    return [run(taylor_green(grid16, 0.05 * lam), grid16, cfg) for lam in (1, 2, 4)]


# --- Cylinders ---


class TestParabolicCylinder:
    def test_time_spans(self):
        assert ParabolicCylinder(1.0, CENTER, 0.5).time_span == (0.75, 1.0)
        a, b = ParabolicCylinder(1.0, CENTER, 0.5, "Q*").time_span
        assert a == pytest.approx(1 - 7 / 32)
        assert b == pytest.approx(1 + 1 / 32)

    def test_half(self):
        half = ParabolicCylinder(1.0, CENTER, 0.5, "Q*").half()
        assert half.r == 0.25 and half.variant == "Q*"

    @pytest.mark.parametrize("kwargs", [{"r": 0.0}, {"r": 1.0, "variant": "P"}])
    def test_rejects_bad_shape(self, kwargs):
        with pytest.raises(RejectedInputError):
            ParabolicCylinder(1.0, CENTER, **kwargs)

    def test_escapes_run(self, tg_traj):
        with pytest.raises(RangeError, match="escapes"):
            ParabolicCylinder(0.5, CENTER, 0.3).check_inside(tg_traj)

    def test_leaves_box(self, tg_traj):
        with pytest.raises(RangeError, match="leaves the box"):
            ParabolicCylinder(0.3, (0.2, math.pi, math.pi), 0.3).check_inside(tg_traj)

    def test_window_falls_back_to_latest_snapshot(self, tg_traj):
        cyl = ParabolicCylinder(0.03, CENTER, 0.05)
        assert window_indices(tg_traj, cyl) == [1]

    def test_measured_sup(self, constant_trajectory, grid16):
        traj = constant_trajectory(grid16, 0.7, [0.0, 0.5, 1.0])
        assert measured_sup(traj, ParabolicCylinder(1.0, CENTER, 0.5)) == pytest.approx(0.7)

    @pytest.mark.parametrize("x", [CENTER, (3.0, 3.1, 3.2)])
    @pytest.mark.parametrize("r", [0.5, 0.2, 0.1])
    def test_half_cylinder_sup_is_smaller(self, tg_traj, x, r):
        cyl = ParabolicCylinder(0.4, x, r)
        assert measured_sup(tg_traj, cyl.half()) <= measured_sup(tg_traj, cyl)


# --- M and the sup bound ---


class TestMFunctional:
    def test_zero_trajectory(self, zero_traj):
        m = M_functional(zero_traj, ParabolicCylinder(0.1, CENTER, 0.3))
        assert m.total == 0.0

    def test_constant_field_closed_form(self, constant_trajectory):
        grid = TorusGrid(32, 2 * math.pi)
        traj = constant_trajectory(grid, 2.0, [0.0, 1.0, 2.0, 3.0])
        cyl = ParabolicCylinder(3.0, CENTER, 1.5)
        m = M_functional(traj, cyl)
        assert m.pressure == 0.0 and m.mixed == 0.0
        assert m.velocity == pytest.approx(4 * math.pi / 3 * 1.5**3 * 8.0, rel=0.02)

    def test_sign_error_changes_scaling(self, constant_trajectory):
        grid = TorusGrid(32, 2 * math.pi)
        traj = constant_trajectory(grid, 2.0, [0.0, 1.0, 2.0, 3.0])
        cyl = ParabolicCylinder(3.0, CENTER, 1.5)
        good = M_functional(traj, cyl)
        bad = M_functional(traj, cyl, sign_error=True)
        assert bad.velocity == pytest.approx(good.velocity * 1.5**4, rel=1e-12)

    def test_future_cylinder_rejected(self, tg_traj):
        with pytest.raises(RejectedInputError, match="past cylinders"):
            M_functional(tg_traj, ParabolicCylinder(0.2, CENTER, 0.3, "Q*"))

    def test_cylinder_before_start(self, tg_traj):
        with pytest.raises(RangeError, match="before t = 0"):
            M_functional(tg_traj, ParabolicCylinder(0.1, CENTER, 0.5))


class TestProp1:
    def test_zero_trajectory_passes(self, zero_traj):
        verdict = prop1_verdict(zero_traj, ParabolicCylinder(0.1, CENTER, 0.3), 0.05)
        assert verdict.passes
        assert verdict.measured_sup == 0.0

    def test_smooth_run_passes_with_bound(self, tg_traj):
        verdict = prop1_verdict(tg_traj, ParabolicCylinder(0.4, CENTER, 0.5), 0.05)
        assert 0 < verdict.M_value <= 0.05
        assert verdict.sup_within_bound
        assert verdict.to_dict()["r"] == 0.5

    def test_zero_threshold_fails_nonzero_flow(self, tg_traj):
        verdict = prop1_verdict(tg_traj, ParabolicCylinder(0.4, CENTER, 0.5), 0.0)
        assert not verdict.passes

    @pytest.mark.parametrize(
        "cyl",
        [
            ParabolicCylinder(0.4, CENTER, 0.5),
            ParabolicCylinder(0.3, (3.0, 3.4, 2.9), 0.3),
            ParabolicCylinder(0.2, CENTER, 0.4),
        ],
    )
    def test_raising_threshold_never_fails_a_pass(self, tg_traj, cyl):
        thresholds = [0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0]
        passes = [prop1_verdict(tg_traj, cyl, eps).passes for eps in thresholds]
        assert passes == sorted(passes)
        assert passes[-1]


class TestProp2:
    def test_small_flow_passes(self, fine_traj):
        result = prop2_limsup(fine_traj, 0.3, FINE_CENTER, (0.5, 0.45, 0.4), 0.05)
        assert result.passes
        assert [r for r, _ in result.table] == [0.5, 0.45, 0.4]
        assert all(v is not None and v > 0 for _, v in result.table)
        assert result.caveat == ""

    def test_single_radius_caveat(self, fine_traj):
        result = prop2_limsup(fine_traj, 0.3, FINE_CENTER, (0.5,), 0.05)
        assert result.caveat == "no-limsup"

    def test_radius_below_floor(self, fine_traj):
        with pytest.raises(RejectedInputError, match="resolution floor"):
            prop2_limsup(fine_traj, 0.3, FINE_CENTER, (0.5, 0.3), 0.05)

    def test_no_admissible_radius(self, fine_traj):
        result = prop2_limsup(fine_traj, 0.39, FINE_CENTER, (0.5, 0.45), 0.05)
        assert math.isnan(result.value)
        assert not result.passes
        assert result.caveat == "no admissible radius"


# --- delta window and the cylinder schedule ---


class TestDelta:
    def test_zero_trajectory_takes_widest_window(self, zero_traj):
        result = lemma41_delta(zero_traj, CENTER, zero_traj.end, 0.05)
        assert result.available
        assert result.delta == FULL_DELTA
        assert all(margin == 0.05 for _, _, margin in result.margins)

    def test_no_certificate(self, tg_traj):
        result = lemma41_delta(tg_traj, CENTER, 0.0, 0.05)
        assert not result.available
        assert "t_star = 0" in result.reason

    def test_tiny_threshold_reports_offender(self, tg_traj):
        result = lemma41_delta(tg_traj, CENTER, tg_traj.end, 1e-12)
        assert not result.available
        assert result.offending_t is not None

    def test_smooth_run(self, tg_traj):
        result = lemma41_delta(tg_traj, CENTER, tg_traj.end, 0.05)
        assert result.available
        assert result.delta >= 1 / 7
        assert all(margin > 0 for _, _, margin in result.margins)

    def test_stronger_flow_narrows_window(self, amplitude_runs):
        deltas = [lemma41_delta(tr, CENTER, tr.end, 0.05).delta for tr in amplitude_runs]
        assert deltas[0] > 0
        assert deltas == sorted(deltas, reverse=True)

    def test_windows_start_after_sigma(self, tg_traj):
        full = lemma41_delta(tg_traj, CENTER, tg_traj.end, 0.05)
        shifted = lemma41_delta(tg_traj, CENTER, 0.2, 0.05, sigma=0.2)
        assert shifted.available
        assert all(0.2 < t <= tg_traj.end + 1e-12 for t, _, _ in shifted.margins)
        assert shifted.delta >= full.delta

    def test_sigma_zero_is_default(self, tg_traj):
        assert lemma41_delta(tg_traj, CENTER, 0.3, 0.05, sigma=0.0) == lemma41_delta(
            tg_traj, CENTER, 0.3, 0.05
        )


class TestSchedule:
    def test_zero_trajectory_passes_all(self, zero_traj):
        report = theorem_TI_schedule(
            zero_traj, CENTER, zero_traj.end, 1.0, delta=FULL_DELTA, epsilon1=0.05
        )
        assert report.available
        assert len(report.entries) == 10
        assert report.passes_all
        for entry in report.entries:
            assert entry.t == pytest.approx(7 * entry.s / 6)
            assert entry.r == pytest.approx(math.sqrt(entry.s))

    def test_narrow_window_unavailable(self, zero_traj):
        report = theorem_TI_schedule(
            zero_traj, CENTER, zero_traj.end, 1.0, delta=0.1, epsilon1=0.05
        )
        assert not report.available
        assert "below" in report.reason

    def test_no_certificate(self, zero_traj):
        report = theorem_TI_schedule(
            zero_traj, CENTER, 0.0, 1.0, delta=FULL_DELTA, epsilon1=0.05
        )
        assert not report.available

    def test_cylinders_past_run_are_recorded(self, zero_traj):
        report = theorem_TI_schedule(
            zero_traj, CENTER, 1.0, 1.0, delta=FULL_DELTA, epsilon1=0.05, s_count=4
        )
        assert report.available
        assert len(report.entries) == 4
        assert all("escapes" in e.error for e in report.entries)
        assert not report.passes_all

    def test_smooth_run(self, tg_traj):
        report = theorem_TI_schedule(
            tg_traj, CENTER, tg_traj.end, 1.0, delta=FULL_DELTA, epsilon1=0.05
        )
        assert report.pass_count == 10

    def test_shifted_start(self, zero_traj):
        report = theorem_TI_schedule(
            zero_traj, CENTER, 0.06, 1.0, delta=FULL_DELTA, epsilon1=0.05, sigma=0.04
        )
        assert report.passes_all
        for entry in report.entries:
            assert entry.t == pytest.approx(0.04 + 7 * entry.s / 6)
            assert entry.r == pytest.approx(math.sqrt(entry.s))

    def test_decay_clock_starts_at_sigma(self, constant_trajectory, grid16):
        traj = constant_trajectory(grid16, 0.7, [0.0, 0.5, 1.0])
        cyl = ParabolicCylinder(1.0, CENTER, 0.5)
        assert decay_sup(traj, cyl) == pytest.approx(0.7)
        assert decay_sup(traj, cyl, sigma=0.75) == pytest.approx(0.35)


# --- Initial-data region ---


class TestDataRegion:
    def test_zero_data_norm(self, grid16):
        gauge = weighted_data_norm(np.zeros((3, *grid16.shape)), grid16)
        assert gauge.L == 0.0
        assert gauge.center == grid16.center

    def test_smooth_data_norm(self, grid16):
        gauge = weighted_data_norm(taylor_green(grid16, 1.0), grid16)
        assert 0 < gauge.L < math.inf

    def test_empty_region(self):
        gauge = InitialDataGauge(2.0, 1.0, CENTER)
        assert gauge.region_empty
        assert not thmD_region(gauge, 10.0, CENTER)

    def test_boundary_is_excluded(self):
        gauge = InitialDataGauge(0.0, 1.0, CENTER)
        x = (math.pi + 0.5, math.pi, math.pi)
        assert thmD_region(gauge, 1.0, CENTER)
        assert not thmD_region(gauge, 0.25, x)
        assert thmD_region(gauge, 0.26, x)

    def test_region_invariant_under_scaling(self, tg_traj):
        lam = 2.0
        scaled = tg_traj.rescaled(lam)
        gauge = weighted_data_norm(tg_traj.snapshots[0].velocity, tg_traj.grid)
        small = weighted_data_norm(scaled.snapshots[0].velocity, scaled.grid)
        assert small.L == pytest.approx(gauge.L, rel=1e-9)
        offsets = [(0.1, 0.0, 0.0), (0.3, 0.2, 0.0), (0.5, 0.5, 0.5), (1.0, 0.0, 0.0)]
        for t in (0.05, 0.2, 0.4, 1.0):
            for off in offsets:
                x = tuple(c + o for c, o in zip(gauge.center, off, strict=True))
                y = tuple(c + o / lam for c, o in zip(small.center, off, strict=True))
                assert thmD_region(small, t / lam**2, y) == thmD_region(gauge, t, x)


# --- Covering ---


class TestCovering:
    def test_parabolic_distance(self):
        assert parabolic_distance((0.0, (0, 0, 0)), (4.0, (1, 0, 0))) == 2.0

    def test_empty(self):
        cover = singular_candidates([], 0.1)
        assert cover.count == 0 and cover.sum_r == 0.0

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(RejectedInputError, match="cluster_radius"):
            singular_candidates([(1.0, (1.0, 2.0, 2.0))], 0.0)

    def test_line_of_samples(self):
        failing = [(1.0, (1 + i * 0.01, 2.0, 2.0)) for i in range(201)]
        cover = singular_candidates(failing, 0.1)
        assert 9 <= cover.count <= 12
        assert cover.sum_r == pytest.approx(1.0, abs=0.25)
        for (t, x), owner in zip(failing, cover.assignments, strict=True):
            assert cover.cylinders[owner].contains(t, x)

    def test_samples_at_two_times(self):
        failing = [(0.0, (2.0, 2.0, 2.0)), (1.0, (2.0, 2.0, 2.0))]
        cover = singular_candidates(failing, 1.0)
        assert cover.count == 1
        (cyl,) = cover.cylinders
        assert cyl.r == pytest.approx(1.0)
        assert cyl.time_span[1] == pytest.approx(1.0)
        assert all(cyl.contains(t, x) for t, x in failing)

    def test_staggered_samples_lie_in_their_cylinders(self):
        failing = [
            (t, (2.0 + i * 0.05, 2.0 + i * 0.02, 2.0))
            for t in (0.0, 0.02, 0.05, 0.3, 0.31, 1.0)
            for i in range(6)
        ]
        cover = singular_candidates(failing, 0.1)
        assert cover.count >= 2
        for (t, x), owner in zip(failing, cover.assignments, strict=True):
            assert cover.cylinders[owner].contains(t, x)

    def test_single_sample_gets_floor_radius(self):
        cover = singular_candidates([(0.2, (1.0, 1.0, 1.0))], 0.1, min_radius=0.05)
        assert cover.count == 1
        assert cover.cylinders[0].r == 0.05
        assert cover.to_dict()["cylinders"][0]["variant"] == "Q*"
