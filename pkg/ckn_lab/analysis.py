"""Sweep the criteria over sample points and assemble the regularity map.

Each sample point is analysed independently (threads via joblib); results come
back in input order, so the map does not depend on the worker count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .budget import TStar, threshold, weighted_budget
from .config import RunConfig
from .criteria import (
    CKNVerdict,
    Covering,
    DeltaResult,
    InitialDataGauge,
    ScheduleReport,
    lemma41_delta,
    prop1_verdict,
    prop2_limsup,
    singular_candidates,
    theorem_TI_schedule,
    thmD_region,
    weighted_data_norm,
)
from .cylinders import ParabolicCylinder
from .errors import RangeError
from .fields import FieldSnapshot, MollifierSchedule, leray_project_spectral, mollify
from .grid import FloatArray, TorusGrid, to_spectral
from .solver import Trajectory, resume, run
from .weighted import (
    BallRegion,
    PsiTable,
    good_sets,
    psi_sequence,
    riesz_potential_map,
    uniform_horizon,
    weighted_energy_report,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LEBESGUE_NOTE = "every grid node of a smooth trajectory is treated as a Lebesgue point"

Point = tuple[float, float, float]


def _finite(value: float | None) -> float | None:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


@dataclass(frozen=True)
class SampleVerdict:
    """Criteria at one (t, x); None marks a criterion that could not be evaluated."""

    t: float
    x: Point
    m_table: tuple[tuple[float, float | None], ...]
    M: float | None
    r: float | None
    prop1_pass: bool | None
    measured_sup: float | None
    sup_bound: float | None
    prop2_value: float | None
    prop2_pass: bool | None
    prop2_caveat: str
    t_star: float
    delta: float | None
    thmD: bool
    schedule: ScheduleReport

    @property
    def evaluated(self) -> bool:
        return self.prop1_pass is not None

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "x": list(self.x),
            "M": _finite(self.M),
            "r": self.r,
            "m_table": [[r, _finite(m)] for r, m in self.m_table],
            "prop1_pass": self.prop1_pass,
            "measured_sup": _finite(self.measured_sup),
            "sup_bound": _finite(self.sup_bound),
            "prop2_value": _finite(self.prop2_value),
            "prop2_pass": self.prop2_pass,
            "prop2_caveat": self.prop2_caveat,
            "t_star": self.t_star,
            "delta": self.delta,
            "thmD": self.thmD,
            "schedule": [e.to_dict() for e in self.schedule.entries],
            "schedule_reason": self.schedule.reason,
        }


@dataclass(frozen=True)
class PointResult:
    x: Point
    samples: tuple[SampleVerdict, ...]
    t_star: TStar
    delta: DeltaResult
    schedule: ScheduleReport
    weighted: dict


@dataclass(frozen=True, eq=False)
class RegularityMap:
    meta: dict
    samples: tuple[SampleVerdict, ...]
    covering: Covering
    psi: PsiTable | None = None
    points: tuple[dict, ...] = ()
    good_sets: dict = field(default_factory=dict)

    @property
    def evaluated(self) -> list[SampleVerdict]:
        return [s for s in self.samples if s.evaluated]

    def summary(self) -> dict:
        evaluated = self.evaluated
        passed = sum(bool(s.prop1_pass) for s in evaluated)
        t_stars = [p["t_star"] for p in self.points]
        return {
            "samples": len(self.samples),
            "evaluated": len(evaluated),
            "prop1_pass": passed,
            "prop1_fail": len(evaluated) - passed,
            "prop2_pass": sum(bool(s.prop2_pass) for s in evaluated),
            "min_t_star": min(t_stars) if t_stars else None,
            "covering_count": self.covering.count,
            "covering_sum_r": self.covering.sum_r,
        }

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "samples": [s.to_dict() for s in self.samples],
            "covering": self.covering.to_dict(),
            "points": list(self.points),
            "psi_table": [] if self.psi is None else [list(r) for r in self.psi.rows()],
            "good_sets": self.good_sets,
        }


def sample_points(cfg: RunConfig, grid: TorusGrid) -> list[Point]:
    """Configured points, then every stride-th node of the box core; the centre if neither."""
    points: list[Point] = [tuple(float(c) for c in p) for p in cfg.sampling.points]  # type: ignore[misc]
    stride = cfg.sampling.lattice_stride
    if stride > 0:
        margin = grid.box_length / 8
        for i in range(0, grid.n_per_axis, stride):
            for j in range(0, grid.n_per_axis, stride):
                for k in range(0, grid.n_per_axis, stride):
                    node = grid.node((i, j, k))
                    if grid.in_core(node, margin):
                        points.append(node)
    if not points:
        points.append(grid.center)
    return points


def sample_times(traj: Trajectory, cfg: RunConfig) -> list[float]:
    return [float(t) for t in traj.times[:: cfg.sampling.t_stride]]


def comparison_index(psi_column: np.ndarray, c: float) -> int | None:
    """First schedule index whose psi^k(x) is below the budget threshold."""
    below = np.flatnonzero(psi_column < threshold(c))
    return int(below[0]) if below.size else None


def _comparison_runs(
    traj: Trajectory,
    cfg: RunConfig,
    schedule: MollifierSchedule,
    indices: set[int],
) -> dict[int, Trajectory]:
    """Smooth runs from the mollified u(sigma), continued on the same time grid."""
    data = traj.snapshot_at(cfg.sampling.sigma)
    grid = traj.grid
    runs = {}
    for k in sorted(indices):
        logger.info(
            "Comparison run from the mollified data at t=%.4g, radius %.4g",
            data.time,
            schedule.radii[k],
        )
        v0 = mollify(data.velocity, grid, schedule, k)
        if data.time == 0:
            runs[k] = run(v0, grid, cfg.solver, tolerances=cfg.tolerances)
            continue
        v_hat = leray_project_spectral(grid, to_spectral(v0))
        start = FieldSnapshot.from_spectral(grid, v_hat, data.time, tolerances=cfg.tolerances)
        runs[k] = resume(start, cfg.solver, tolerances=cfg.tolerances)
    return runs


def data_potential(u0: FloatArray, grid: TorusGrid, c: float) -> dict:
    """ess sup over the box of int |u0|^2 / |x - y| dy against the budget threshold."""
    density = np.einsum("i...,i...->...", u0, u0)
    ess_sup = float(np.max(riesz_potential_map(density, grid, 0.0)))
    return {"ess_sup": ess_sup, "threshold": threshold(c), "small": ess_sup < threshold(c)}


def _prop1_row(
    traj: Trajectory,
    t: float,
    x: Point,
    cfg: RunConfig,
    sign_error: bool,
) -> tuple[list[tuple[float, float | None]], CKNVerdict | None]:
    """M for every radius; the verdict row uses the radius with the smallest M."""
    c = cfg.constants
    table: list[tuple[float, float | None]] = []
    best = None
    for r in cfg.sampling.r_sequence:
        try:
            verdict = prop1_verdict(
                traj, ParabolicCylinder(t, x, r), c.epsilon1, c.c0, sign_error=sign_error
            )
        except RangeError:
            table.append((r, None))
            continue
        table.append((r, verdict.M_value))
        if best is None or verdict.M_value < best.M_value:
            best = verdict
    return table, best


def _prop2(
    traj: Trajectory, t: float, x: Point, cfg: RunConfig
) -> tuple[float | None, bool | None, str]:
    floor = 2 * traj.grid.spacing
    radii = tuple(r for r in cfg.sampling.r_sequence if r >= floor)
    if not radii:
        return None, None, f"no radius above the resolution floor {floor:.4g}"
    result = prop2_limsup(traj, t, x, radii, cfg.constants.epsilon3)
    if not math.isfinite(result.value):
        return None, None, result.caveat
    return result.value, result.passes, result.caveat


def analyze_point(
    traj: Trajectory,
    v_traj: Trajectory | None,
    x: Point,
    cfg: RunConfig,
    times: list[float],
    gauge: InitialDataGauge,
    *,
    sign_error: bool = False,
) -> PointResult:
    """Every criterion at one spatial sample point."""
    c = cfg.constants
    sigma = cfg.sampling.sigma
    if v_traj is None:
        t_star = TStar(0.0, False, "no mollified datum meets the psi threshold")
    else:
        budget = weighted_budget(traj, v_traj, x, c.budget_mu, c.mass_constant_c, sigma)
        t_star = budget.t_star
    delta = lemma41_delta(traj, x, t_star.t_star, c.epsilon1, c.mass_constant_c, sigma)
    schedule = theorem_TI_schedule(
        traj,
        x,
        t_star.t_star,
        c.mass_constant_c,
        delta=delta.delta,
        epsilon1=c.epsilon1,
        c0=c.c0,
        s_count=cfg.sampling.s_count,
        sigma=sigma,
    )
    if not schedule.available:
        schedule = ScheduleReport(False, reason=delta.reason or schedule.reason)
    samples = []
    for t in times:
        table, best = _prop1_row(traj, t, x, cfg, sign_error)
        p2_value, p2_pass, caveat = _prop2(traj, t, x, cfg)
        samples.append(
            SampleVerdict(
                t=t,
                x=x,
                m_table=tuple(table),
                M=None if best is None else best.M_value,
                r=None if best is None else best.cylinder.r,
                prop1_pass=None if best is None else best.passes,
                measured_sup=None if best is None else best.measured_sup,
                sup_bound=None if best is None else best.sup_bound,
                prop2_value=p2_value,
                prop2_pass=p2_pass,
                prop2_caveat=caveat,
                t_star=t_star.t_star,
                delta=delta.delta if delta.available else None,
                thmD=thmD_region(gauge, t, x),
                schedule=schedule,
            )
        )
    return PointResult(
        x,
        tuple(samples),
        t_star,
        delta,
        schedule,
        weighted_energy_report(traj, x).to_dict(),
    )


def analyze_trajectory(
    traj: Trajectory, cfg: RunConfig, *, sign_error: bool = False
) -> RegularityMap:
    """Evaluate every criterion over the configured samples of one trajectory."""
    grid = traj.grid
    c = cfg.constants
    points = sample_points(cfg, grid)
    times = sample_times(traj, cfg)
    u0 = traj.snapshots[0].velocity
    data = traj.snapshot_at(cfg.sampling.sigma).velocity
    schedule = MollifierSchedule.geometric(grid, cfg.sampling.schedule_count)
    psi = psi_sequence(data, grid, schedule, points)
    ks = [comparison_index(psi.values[:, i], c.mass_constant_c) for i in range(len(points))]
    runs = _comparison_runs(traj, cfg, schedule, {k for k in ks if k is not None})
    gauge = weighted_data_norm(u0, grid, c.L0)
    logger.info(
        "Analyzing %d points x %d times with %d worker(s)",
        len(points),
        len(times),
        cfg.threads,
    )
    results: list[PointResult] = Parallel(n_jobs=cfg.threads, backend="threading")(
        delayed(analyze_point)(
            traj,
            None if k is None else runs[k],
            x,
            cfg,
            times,
            gauge,
            sign_error=sign_error,
        )
        for x, k in zip(points, ks, strict=True)
    )
    samples = tuple(s for res in results for s in res.samples)
    failing = [(s.t, s.x) for s in samples if s.prop1_pass is False]
    radius = min(cfg.sampling.r_sequence)
    covering = singular_candidates(failing, radius, radius)

    region = BallRegion(grid.center, grid.box_length / 4)
    sets = good_sets(data, grid, schedule, c.eta, region, c.epsilon_measure)
    t_star_by_x = {grid.nearest_index(r.x): r.t_star.t_star for r in results}
    good = sets.summary()
    good["uniform_horizon"] = uniform_horizon(t_star_by_x, sets.omega_mask)

    meta = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": cfg.config_hash,
        "trajectory_id": traj.trajectory_id,
        "constants": cfg.constants_echo(),
        "grid": {"n_per_axis": grid.n_per_axis, "box_length": grid.box_length},
        "times": [traj.start, traj.end],
        "initial_data_gauge": {"L": gauge.L, "L0": gauge.L0, "center": list(gauge.center)},
        "data_potential": data_potential(u0, grid, c.mass_constant_c),
        "sigma": cfg.sampling.sigma,
        "lebesgue_points": LEBESGUE_NOTE,
        "uncalibrated_constants": True,
    }
    points_out = tuple(
        {
            "x": list(r.x),
            "comparison_index": k,
            "t_star": r.t_star.t_star,
            "certified": r.t_star.certified,
            "t_star_reason": r.t_star.reason,
            "delta": r.delta.to_dict(),
            "schedule": r.schedule.to_dict(),
            "weighted": r.weighted,
        }
        for r, k in zip(results, ks, strict=True)
    )
    regularity = RegularityMap(meta, samples, covering, psi, points_out, good)
    summary = regularity.summary()
    logger.info(
        "Analysis done: %d/%d samples pass, covering sum %.4g",
        summary["prop1_pass"],
        summary["evaluated"],
        summary["covering_sum_r"],
    )
    return regularity


def calibrate(regularity: RegularityMap, grid_points: int = 19) -> dict:
    """Smallest thresholds at which every evaluated sample passes, plus pass fractions."""
    m_values = [s.M for s in regularity.evaluated if s.M is not None]
    p2_values = [s.prop2_value for s in regularity.samples if s.prop2_value is not None]
    table = []
    for eps in np.geomspace(1e-8, 1e1, grid_points).tolist():
        table.append(
            {
                "threshold": eps,
                "prop1_fraction": (
                    sum(m <= eps for m in m_values) / len(m_values) if m_values else None
                ),
                "prop2_fraction": (
                    sum(v <= eps for v in p2_values) / len(p2_values) if p2_values else None
                ),
            }
        )
    return {
        "config_hash": regularity.meta["config_hash"],
        "trajectory_id": regularity.meta["trajectory_id"],
        "epsilon1_min": max(m_values) if m_values else 0.0,
        "epsilon3_min": max(p2_values) if p2_values else 0.0,
        "samples": len(m_values),
        "table": table,
    }
