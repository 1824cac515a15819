"""Tests for the property suite runner."""

import pytest

from ckn_lab import verify
from ckn_lab.errors import RejectedInputError
from ckn_lab.verify import CRITERIA, CriterionResult, VerifyOptions, run_suite

QUICK = VerifyOptions(quick=True)


def test_criterion_ids():
    assert list(CRITERIA) == [
        "pressure-oracle",
        "energy-equality",
        "local-energy",
        "scale-invariance",
        "mu-monotonicity",
        "closed-forms",
        "psi-decay-hls",
        "interpolation",
        "budget-schedule",
        "covering",
        "determinism",
    ]


class TestOptions:
    def test_unknown_canary(self):
        with pytest.raises(RejectedInputError, match="canary"):
            VerifyOptions(canary="flip-everything")


class TestRunSuite:
    def test_unknown_id(self):
        with pytest.raises(RejectedInputError, match="no-such-check"):
            run_suite(QUICK, ["covering", "no-such-check"])

    def test_fixed_order_and_deduplication(self, monkeypatch):
        for cid in CRITERIA:
            monkeypatch.setitem(
                CRITERIA, cid, lambda opts, cid=cid: CriterionResult(cid, True)
            )
        results = run_suite(QUICK, ["covering", "pressure-oracle", "covering"])
        assert [r.id for r in results] == ["pressure-oracle", "covering"]

    def test_crashing_check_is_a_failure(self, monkeypatch):
        def boom(opts):
            raise ZeroDivisionError("bad cell")

        monkeypatch.setitem(CRITERIA, "covering", boom)
        (result,) = run_suite(QUICK, ["covering"])
        assert not result.passed
        assert result.detail == "ZeroDivisionError: bad cell"


class TestChecks:
    def test_covering(self):
        result = verify.check_covering(QUICK)
        assert result.passed
        assert result.measured["sound"]

    def test_scale_invariance(self):
        result = verify.check_scale_invariance(QUICK)
        assert result.passed
        assert result.measured["max_relative_deviation"] <= 1e-8

    def test_scale_invariance_canary(self):
        result = verify.check_scale_invariance(VerifyOptions(quick=True, canary="m-sign"))
        assert not result.passed
        assert result.detail == "sign-error canary active"

    def test_pressure_oracle(self):
        result = verify.check_pressure_oracle(QUICK)
        assert result.passed
        assert result.measured["n_per_axis"] == 8

    def test_interpolation(self):
        assert verify.check_interpolation(QUICK).passed

    def test_closed_forms(self):
        assert verify.check_closed_forms(QUICK).passed

    def test_energy_equality(self):
        result = verify.check_energy_equality(QUICK)
        assert result.passed
        assert result.measured["halving_ratio"] >= 12

    def test_local_energy(self):
        result = verify.check_local_energy(QUICK)
        assert result.passed
        assert result.measured["worst_relative_residual"] <= 1e-4
        assert result.measured["degeneracy_gap"] <= 1e-12

    def test_mu_monotonicity(self):
        result = verify.check_mu_monotonicity(QUICK)
        assert result.passed
        assert result.measured["monotone"]

    def test_psi_decay_hls(self):
        assert verify.check_psi_decay(QUICK).passed

    def test_budget_schedule(self):
        result = verify.check_budget_schedule(QUICK)
        assert result.passed
        assert result.measured["shifted_schedule_passes"] == 10
