"""Output files of an analysis: JSON map, CSV exports, plot data and a markdown report."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from .analysis import SCHEMA_VERSION, RegularityMap
from .errors import RejectedInputError

logger = logging.getLogger(__name__)

TEMPLATES_DIR = Path(__file__).parent / "templates"

MAP_FILE = "regularity_map.json"
SAMPLES_HEADER = (
    "sample_index",
    "t",
    "x0",
    "x1",
    "x2",
    "M",
    "r",
    "prop1_pass",
    "prop2_value",
    "prop2_pass",
    "t_star",
    "delta",
    "thmD",
    "schedule_pass_count",
)
PSI_HEADER = ("x_index", "k", "psi_k")
M_VS_R_HEADER = ("sample_index", "t", "x0", "x1", "x2", "r", "M")
T_STAR_HEADER = ("sample_index", "t", "x0", "x1", "x2", "t_star", "delta", "thmD")


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: tuple[str, ...], rows: list[tuple]) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.debug("Wrote %d rows to %s", len(rows), path)
    return path


def dumps(data: Any) -> str:
    """Deterministic JSON text (sorted keys, trailing newline)."""
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def write_json(path: Path, data: Any) -> Path:
    path.write_text(dumps(data))
    logger.debug("Wrote %s", path)
    return path


def _sample_rows(samples: list[dict]) -> list[tuple]:
    rows = []
    for i, s in enumerate(samples):
        passed = sum(
            bool(e.get("prop1_pass") and e.get("decay_pass")) for e in s["schedule"]
        )
        rows.append(
            (
                i,
                s["t"],
                *s["x"],
                s["M"],
                s["r"],
                s["prop1_pass"],
                s["prop2_value"],
                s["prop2_pass"],
                s["t_star"],
                s["delta"],
                s["thmD"],
                passed,
            )
        )
    return rows


def render_markdown(regularity: RegularityMap) -> str:
    env = Environment(
        loader=FileSystemLoader(TEMPLATES_DIR),
        undefined=StrictUndefined,
        keep_trailing_newline=True,
        autoescape=False,
    )
    template = env.get_template("report.md.j2")
    return template.render(
        meta=regularity.meta,
        summary=regularity.summary(),
        points=regularity.points,
        covering=regularity.covering.to_dict(),
        good_sets=regularity.good_sets,
    )


def write_analysis(regularity: RegularityMap, out_dir: str | Path) -> list[Path]:
    """Write the map JSON, flat CSV exports, the weighted report and report.md."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = regularity.to_dict()
    paths = [
        write_json(out / MAP_FILE, data),
        write_csv(out / "samples.csv", SAMPLES_HEADER, _sample_rows(data["samples"])),
        write_json(
            out / "weighted_report.json",
            {
                "meta": data["meta"],
                "points": [
                    {"x": p["x"], **p["weighted"]} for p in data["points"]
                ],
                "good_sets": data["good_sets"],
            },
        ),
        write_csv(out / "psi_table.csv", PSI_HEADER, [tuple(r) for r in data["psi_table"]]),
    ]
    report = out / "report.md"
    report.write_text(render_markdown(regularity))
    paths.append(report)
    logger.info("Wrote %d analysis files to %s", len(paths), out)
    return paths


def load_map(path: str | Path) -> dict:
    """Read a regularity map and check its schema version.

    Raises:
        RejectedInputError: If the schema version is not the supported one.
        OSError: If the file cannot be read.
    """
    data = json.loads(Path(path).read_text())
    version = data.get("meta", {}).get("schema_version") if isinstance(data, dict) else None
    if version != SCHEMA_VERSION:
        msg = f"schema_version mismatch: expected {SCHEMA_VERSION}, got {version}"
        raise RejectedInputError(msg)
    return data


def plot_rows(data: dict) -> dict[str, list[tuple]]:
    """Rows of every plot family, keyed by file name."""
    samples = data.get("samples", [])
    m_rows = [
        (i, s["t"], *s["x"], r, m)
        for i, s in enumerate(samples)
        for r, m in s["m_table"]
    ]
    t_rows = [
        (i, s["t"], *s["x"], s["t_star"], s["delta"], s["thmD"])
        for i, s in enumerate(samples)
    ]
    psi_rows = [tuple(r) for r in data.get("psi_table", [])]
    return {"m_vs_r.csv": m_rows, "psi_decay.csv": psi_rows, "t_star_map.csv": t_rows}


def write_plotdata(data: dict, out_dir: str | Path) -> list[Path]:
    """One CSV per plot family; an empty map gives header-only files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    headers = {
        "m_vs_r.csv": M_VS_R_HEADER,
        "psi_decay.csv": PSI_HEADER,
        "t_star_map.csv": T_STAR_HEADER,
    }
    rows = plot_rows(data)
    paths = [write_csv(out / name, headers[name], rows[name]) for name in headers]
    logger.info("Wrote plot data to %s", out)
    return paths
