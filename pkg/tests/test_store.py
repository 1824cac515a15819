"""Tests for trajectory directories."""

import numpy as np
import pytest

from ckn_lab.config import RunConfig
from ckn_lab.errors import RejectedInputError
from ckn_lab.store import MANIFEST_NAME, TrajectoryStore, snapshot_name


@pytest.fixture()
def saved(tmp_path, tg_traj):
    store = TrajectoryStore(tmp_path / "run")
    store.save(tg_traj, RunConfig(), horizon=1.5)
    return store


def test_snapshot_name():
    assert snapshot_name(7) == "snapshot_00007.ckn"


class TestSave:
    def test_round_trip(self, saved, tg_traj):
        loaded = saved.load()
        assert len(loaded) == len(tg_traj)
        np.testing.assert_array_equal(loaded.times, tg_traj.times)
        for a, b in zip(loaded.snapshots, tg_traj.snapshots, strict=True):
            np.testing.assert_array_equal(a.velocity, b.velocity)
        np.testing.assert_array_equal(loaded.ledger.energy, tg_traj.ledger.energy)

    def test_manifest_fields(self, saved, tg_traj):
        manifest = saved.manifest()
        assert manifest["status"] == "complete"
        assert manifest["config_hash"] == RunConfig().config_hash
        assert manifest["regular_solution_horizon"] == 1.5
        assert len(manifest["snapshots"]) == len(tg_traj)
        assert manifest["snapshots"][0] == {"file": "snapshot_00000.ckn", "t": 0.0}
        assert len(manifest["energy_table"]["t"]) == len(tg_traj.ledger)

    def test_no_temporary_files_left(self, saved):
        assert not [p for p in saved.directory.iterdir() if p.name.endswith(".tmp")]

    def test_unknown_status(self, tmp_path, zero_traj):
        with pytest.raises(RejectedInputError, match="status"):
            TrajectoryStore(tmp_path).save(zero_traj, RunConfig(), status="paused")

    def test_blowup_status(self, tmp_path, zero_traj):
        store = TrajectoryStore(tmp_path)
        store.save(zero_traj, RunConfig(), status="blowup")
        assert store.manifest()["status"] == "blowup"

    def test_repeated_save_is_byte_identical(self, tmp_path, zero_traj):
        a, b = TrajectoryStore(tmp_path / "a"), TrajectoryStore(tmp_path / "b")
        a.save(zero_traj, RunConfig())
        b.save(zero_traj, RunConfig())
        names = sorted(p.name for p in a.directory.iterdir())
        assert names == sorted(p.name for p in b.directory.iterdir())
        for name in names:
            assert (a.directory / name).read_bytes() == (b.directory / name).read_bytes()


class TestLoad:
    def test_missing_manifest(self, tmp_path):
        store = TrajectoryStore(tmp_path / "nothing")
        assert not store.exists()
        with pytest.raises(FileNotFoundError, match=MANIFEST_NAME):
            store.load()

    def test_missing_snapshot(self, saved):
        (saved.directory / snapshot_name(3)).unlink()
        with pytest.raises(FileNotFoundError, match="missing snapshot"):
            saved.load()
