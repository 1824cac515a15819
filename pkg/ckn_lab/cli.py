"""ckn-lab: partial-regularity criteria on computed Navier-Stokes trajectories.

Usage:
    ckn-lab [--verbose] COMMAND

Commands:
    run --config FILE [--out DIR]             Integrate and store a trajectory
    analyze TRAJ_DIR [--config FILE]          Evaluate every criterion, write the map
    verify [--quick] [--only ID...]           Run the property suite
    plotdata MAP_JSON [--out DIR]             Export CSV plot families from a map
    calibrate TRAJ_DIR [--config FILE]        Smallest passing thresholds on a run

Exit codes:
    0 success, 1 failed verify criteria, 2 invalid config or input,
    3 solver blow-up (partial output kept), 4 I/O error or missing snapshots.

Environment:
    CKN_OUT_DIR   default output directory (overridden by --out)
    CKN_THREADS   worker count (overridden by --threads)
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import RegularityMap, analyze_trajectory, calibrate
from .config import RunConfig, config_from_dict, load_config, validate
from .errors import ConfigError, LabError, SnapshotFormatError, SolverError
from .grid import TorusGrid
from .initial_data import initial_velocity
from .report import MAP_FILE, dumps, load_map, write_analysis, write_json, write_plotdata
from .solver import regular_solution_horizon, run
from .store import TrajectoryStore
from .verify import CANARIES, CRITERIA, VerifyOptions, run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INVALID = 2
EXIT_BLOWUP = 3
EXIT_IO = 4


def _positive_int(value: str) -> int:
    """Argparse type: parse a positive integer (> 0)."""
    n = int(value)
    if n <= 0:
        msg = f"must be a positive integer, got {n}"
        raise argparse.ArgumentTypeError(msg)
    return n


def _resolve_config(args: argparse.Namespace, fallback: dict | None = None) -> RunConfig:
    """File (or the stored echo), then environment, then command-line flags."""
    if getattr(args, "config", None) is None and fallback is not None:
        cfg = load_config(None)
        cfg = replace(config_from_dict(fallback), out_dir=cfg.out_dir, threads=cfg.threads)
    else:
        cfg = load_config(getattr(args, "config", None))
    updates = {}
    if getattr(args, "out", None):
        updates["out_dir"] = str(args.out)
    if getattr(args, "threads", None):
        updates["threads"] = args.threads
    if updates:
        cfg = validate(replace(cfg, **updates))
    return cfg


def _emit(data: dict, fmt: str) -> None:
    """Print a flat summary as JSON or as a header plus one CSV row."""
    if fmt == "json":
        print(json.dumps(data, sort_keys=True))
        return
    keys = list(data)
    print(",".join(keys))
    print(",".join("" if data[k] is None else str(data[k]) for k in keys))


def _summary_line(summary: dict) -> str:
    min_t = summary["min_t_star"]
    return (
        f"samples={summary['samples']} evaluated={summary['evaluated']} "
        f"pass={summary['prop1_pass']} fail={summary['prop1_fail']} "
        f"min_t_star={'n/a' if min_t is None else f'{min_t:.6g}'} "
        f"sum_r={summary['covering_sum_r']:.6g}"
    )


# --- Commands ---


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out_dir)
    grid = TorusGrid(cfg.grid.n_per_axis, cfg.grid.box_length)
    u0 = initial_velocity(cfg, grid)
    horizon = regular_solution_horizon(u0, grid, cfg.constants.mass_constant_c)
    store = TrajectoryStore(out)
    try:
        traj = run(u0, grid, cfg.solver, tolerances=cfg.tolerances)
    except SolverError as e:
        if e.partial is not None:
            store.save(e.partial, cfg, status="blowup", horizon=_finite_or_none(horizon))
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_BLOWUP
    store.save(traj, cfg, horizon=_finite_or_none(horizon))
    if args.format:
        _emit({"snapshots": len(traj), "t_end": traj.end, "out_dir": str(out)}, args.format)
    else:
        print(f"run: {len(traj)} snapshots to t={traj.end:.6g} in {out}")
    return EXIT_OK


def _finite_or_none(value: float) -> float | None:
    return value if math.isfinite(value) else None


def _analyze(args: argparse.Namespace) -> tuple[RegularityMap, RunConfig, TrajectoryStore]:
    store = TrajectoryStore(args.trajectory)
    manifest = store.manifest()
    cfg = _resolve_config(args, fallback=manifest["config"])
    traj = store.load(tolerances=cfg.tolerances)
    return analyze_trajectory(traj, cfg), cfg, store


def cmd_analyze(args: argparse.Namespace) -> int:
    regularity, _, store = _analyze(args)
    out = Path(args.out) if args.out else store.directory / "analysis"
    write_analysis(regularity, out)
    summary = regularity.summary()
    if args.format:
        _emit(summary, args.format)
    else:
        print(_summary_line(summary))
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    regularity, _, store = _analyze(args)
    out = Path(args.out) if args.out else store.directory / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    result = calibrate(regularity)
    write_json(out / "calibration.json", result)
    print(
        f"calibrate: epsilon1 >= {result['epsilon1_min']:.6g}, "
        f"epsilon3 >= {result['epsilon3_min']:.6g} over {result['samples']} samples"
    )
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    threads = _resolve_config(args).threads
    opts = VerifyOptions(quick=args.quick, threads=threads, canary=args.canary)
    results = run_suite(opts, args.only)
    if args.format == "json":
        print(dumps([r.to_dict() for r in results]), end="")
    else:
        for r in results:
            status = "PASS" if r.passed else "FAIL"
            measured = json.dumps(r.measured, sort_keys=True)
            print(f"{r.id},{status},{measured if args.format == 'csv' else r.detail}")
    failed = [r.id for r in results if not r.passed]
    if failed:
        print(f"Error: {len(failed)} criteria failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def cmd_plotdata(args: argparse.Namespace) -> int:
    path = Path(args.map)
    if path.is_dir():
        path = path / MAP_FILE
    data = load_map(path)
    out = Path(args.out) if args.out else path.parent / "plotdata"
    paths = write_plotdata(data, out)
    if args.format:
        _emit({"files": len(paths), "out_dir": str(out)}, args.format)
    else:
        print(f"plotdata: {len(paths)} files in {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ckn-lab",
        description="Partial-regularity criteria on computed Navier-Stokes trajectories",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", help="Command")

    def common(p: argparse.ArgumentParser, *, config: bool = True) -> None:
        if config:
            p.add_argument("--config", type=Path, help="YAML run file")
        p.add_argument("--out", type=Path, help="Output directory (default: $CKN_OUT_DIR)")
        p.add_argument("--threads", type=_positive_int, help="Workers (default: $CKN_THREADS)")
        p.add_argument("--format", choices=["json", "csv"], help="Summary output format")

    p_run = sub.add_parser("run", help="Integrate and store a trajectory")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_analyze = sub.add_parser("analyze", help="Evaluate the criteria on a stored run")
    p_analyze.add_argument("trajectory", type=Path, help="Trajectory directory")
    common(p_analyze)
    p_analyze.set_defaults(func=cmd_analyze)

    p_verify = sub.add_parser("verify", help="Run the property suite")
    common(p_verify, config=False)
    p_verify.add_argument("--quick", action="store_true", help="Reduced sizes")
    p_verify.add_argument("--only", nargs="+", choices=list(CRITERIA), metavar="ID")
    p_verify.add_argument("--canary", choices=list(CANARIES), help="Inject a known defect")
    p_verify.set_defaults(func=cmd_verify)

    p_plot = sub.add_parser("plotdata", help="Export plot CSVs from a regularity map")
    p_plot.add_argument("map", help="regularity_map.json or its directory")
    common(p_plot, config=False)
    p_plot.set_defaults(func=cmd_plotdata)

    p_cal = sub.add_parser("calibrate", help="Threshold sweep on a stored run")
    p_cal.add_argument("trajectory", type=Path, help="Trajectory directory")
    common(p_cal)
    p_cal.set_defaults(func=cmd_calibrate)

    return parser


def main(argv: list[str] | None = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        sys.exit(EXIT_INVALID)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        code = args.func(args)
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        code = EXIT_INVALID
    except (OSError, SnapshotFormatError) as e:
        print(f"Error: {e}", file=sys.stderr)
        code = EXIT_IO
    except (LabError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        code = EXIT_INVALID
    if code:
        sys.exit(code)


if __name__ == "__main__":
    main()
