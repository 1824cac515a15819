"""Trajectory directories: snapshot files plus a JSON run manifest."""

from __future__ import annotations

import json
import logging
import os
import tempfile
from pathlib import Path

from .config import DEFAULT_TOLERANCES, RunConfig, Tolerances, dump_config
from .errors import RejectedInputError
from .snapshot_io import read_snapshot, write_snapshot
from .solver import EnergyLedger, Trajectory, _readonly

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
STATUSES = ("complete", "blowup")


def snapshot_name(index: int) -> str:
    return f"snapshot_{index:05d}.ckn"


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


class TrajectoryStore:
    """Read and write one trajectory directory.

    Layout::

        <directory>/manifest.json
        <directory>/snapshot_00000.ckn
        <directory>/snapshot_00001.ckn
        ...

    Every file is written to a temporary name and renamed into place, so a
    reader never sees a half-written snapshot or manifest.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    @property
    def manifest_path(self) -> Path:
        return self.directory / MANIFEST_NAME

    def exists(self) -> bool:
        return self.manifest_path.is_file()

    def save(
        self,
        trajectory: Trajectory,
        config: RunConfig,
        *,
        status: str = "complete",
        horizon: float | None = None,
    ) -> Path:
        """Write snapshots and the manifest.

        Args:
            trajectory: The run to persist (possibly partial).
            config: The run configuration, echoed in the manifest.
            status: "complete", or "blowup" for a partial run.
            horizon: Regular-solution horizon to echo, if computed.

        Returns:
            Path of the written manifest.

        Raises:
            RejectedInputError: If status is unknown.
            OSError: If the directory cannot be written.
        """
        if status not in STATUSES:
            raise RejectedInputError(f"unknown run status {status!r}")
        self.directory.mkdir(parents=True, exist_ok=True)
        names = []
        for i, snap in enumerate(trajectory.snapshots):
            name = snapshot_name(i)
            target = self.directory / name
            tmp = self.directory / f".{name}.tmp"
            write_snapshot(tmp, snap)
            os.replace(tmp, target)
            names.append(name)
        ledger = trajectory.ledger
        manifest = {
            "manifest_version": MANIFEST_VERSION,
            "status": status,
            "trajectory_id": trajectory.trajectory_id or config.config_hash[:16],
            "config_hash": config.config_hash,
            "config": dump_config(config),
            "dealias": trajectory.dealias,
            "viscosity": trajectory.viscosity,
            "regular_solution_horizon": horizon,
            "snapshots": [
                {"file": name, "t": float(t)}
                for name, t in zip(names, trajectory.times, strict=True)
            ],
            "energy_table": {
                "t": ledger.times.tolist(),
                "energy": ledger.energy.tolist(),
                "enstrophy": ledger.enstrophy.tolist(),
                "enstrophy_rate": ledger.enstrophy_rate.tolist(),
            },
        }
        text = json.dumps(manifest, indent=2, sort_keys=True, allow_nan=True) + "\n"
        _atomic_write_text(self.manifest_path, text)
        logger.info(
            "Saved %d snapshots (%s) to %s", len(names), status, self.directory
        )
        return self.manifest_path

    def manifest(self) -> dict:
        """Parsed manifest.

        Raises:
            FileNotFoundError: If the directory holds no manifest.
        """
        if not self.exists():
            raise FileNotFoundError(f"no {MANIFEST_NAME} in {self.directory}")
        return json.loads(self.manifest_path.read_text())

    def load(self, *, tolerances: Tolerances = DEFAULT_TOLERANCES) -> Trajectory:
        """Rebuild the trajectory from disk.

        Raises:
            FileNotFoundError: If the manifest or a listed snapshot is missing.
            SnapshotFormatError: If a snapshot file is malformed.
        """
        manifest = self.manifest()
        entries = manifest["snapshots"]
        snapshots = []
        for entry in entries:
            path = self.directory / entry["file"]
            if not path.is_file():
                raise FileNotFoundError(f"missing snapshot {path}")
            snapshots.append(read_snapshot(path, tolerances=tolerances))
        table = manifest["energy_table"]
        ledger = EnergyLedger(
            _readonly(table["t"]),
            _readonly(table["energy"]),
            _readonly(table["enstrophy"]),
            _readonly(table["enstrophy_rate"]),
        )
        logger.info("Loaded %d snapshots from %s", len(snapshots), self.directory)
        return Trajectory(
            tuple(snapshots),
            ledger,
            manifest.get("dealias", 2 / 3),
            manifest.get("viscosity", 1.0),
            manifest.get("trajectory_id", ""),
        )

