"""Property suite: every identity and inequality a finite computation can check.

Each check returns a CriterionResult with its measured values. ``quick`` shrinks
grids and ensembles so the whole suite fits in a test run.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import analyze_trajectory
from .budget import weighted_budget
from .config import Constants, GridSection, RunConfig, Sampling, SolverConfig
from .criteria import (
    Covering,
    M_functional,
    SCHEDULE_MIN_DELTA,
    lemma41_delta,
    singular_candidates,
    theorem_TI_schedule,
    weighted_data_norm,
)
from .cylinders import ParabolicCylinder
from .energy import TestFunctionSpec, local_energy_balance, strong_energy_residual
from .errors import RejectedInputError
from .fields import FieldSnapshot, MollifierSchedule, pressure_oracle, solve_pressure
from .grid import TorusGrid, philox_generator
from .initial_data import (
    STREAM_ENSEMBLE,
    ball_indicator,
    divergence_free_bump,
    jump_field,
    random_solenoidal_field,
    taylor_green,
)
from .report import dumps
from .solver import run
from .weighted import (
    ADMISSIBLE_EXPONENTS,
    BallRegion,
    WeightSpec,
    hls_ratio,
    interpolation_ratio,
    mu_ladder,
    mu_ladder_extrapolate,
    psi,
    psi_sequence,
    weighted_D,
    weighted_E,
)

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
CANARIES = ("m-sign",)


@dataclass(frozen=True)
class VerifyOptions:
    quick: bool = False
    threads: int = 2
    canary: str | None = None
    seed: int = 20240917

    def __post_init__(self) -> None:
        if self.canary is not None and self.canary not in CANARIES:
            raise RejectedInputError(
                f"unknown canary {self.canary!r}; choose from {', '.join(CANARIES)}"
            )


@dataclass(frozen=True)
class CriterionResult:
    id: str
    passed: bool
    measured: dict = field(default_factory=dict)
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "passed": self.passed,
            "measured": self.measured,
            "detail": self.detail,
        }


def _ensemble(grid: TorusGrid, count: int, seed: int) -> list[np.ndarray]:
    rng = philox_generator(seed, STREAM_ENSEMBLE)
    return [random_solenoidal_field(grid, rng) for _ in range(count)]


def check_pressure_oracle(opts: VerifyOptions) -> CriterionResult:
    grid = TorusGrid(8 if opts.quick else 16, TWO_PI)
    count = 4 if opts.quick else 20
    worst = 0.0
    for u in _ensemble(grid, count, opts.seed):
        diff = np.abs(solve_pressure(u, grid) - pressure_oracle(u, grid))
        worst = max(worst, float(diff.max()))
    return CriterionResult(
        "pressure-oracle",
        worst <= 1e-8,
        {"fields": count, "n_per_axis": grid.n_per_axis, "max_abs_diff": worst},
    )


def _energy_run(n: int, dt: float, t_end: float, stride: int, amplitude: float = 1.0):
    grid = TorusGrid(n, TWO_PI)
    cfg = SolverConfig(dt=dt, t_end=t_end, snapshot_stride=stride)
    return run(taylor_green(grid, amplitude), grid, cfg)


def check_energy_equality(opts: VerifyOptions) -> CriterionResult:
    n, t_end, dt = (16, 0.1, 2e-3) if opts.quick else (32, 0.5, 1e-3)
    traj = _energy_run(n, dt, t_end, stride=max(1, int(round(t_end / dt))))
    norm = traj.ledger.energy[0]
    end = float(traj.ledger.times[-1])
    rel = abs(strong_energy_residual(traj, 0.0, end)) / norm
    # convergence order on coarse steps, where the time error dominates roundoff
    coarse = [
        _energy_run(n, h, 0.2, stride=int(round(0.2 / h))) for h in (0.02, 0.01)
    ]
    residuals = [
        abs(strong_energy_residual(tr, 0.0, float(tr.ledger.times[-1]))) for tr in coarse
    ]
    ratio = residuals[0] / residuals[1] if residuals[1] > 0 else math.inf
    return CriterionResult(
        "energy-equality",
        rel <= 1e-6 and ratio >= 12,
        {"relative_residual": rel, "halving_ratio": ratio, "coarse_residuals": residuals},
    )


def check_local_energy(opts: VerifyOptions) -> CriterionResult:
    n, t_end, dt = (16, 0.1, 2e-3) if opts.quick else (32, 0.5, 1e-3)
    traj = _energy_run(n, dt, t_end, stride=10)
    end = traj.end
    center = (math.pi, math.pi, math.pi)
    offsets = ((0, 0, 0), (0.4, 0, 0), (0, -0.4, 0), (0, 0, 0.4), (-0.3, 0.3, 0))
    worst = 0.0
    for off in offsets:
        phi = TestFunctionSpec(
            end / 2, tuple(c + o for c, o in zip(center, off, strict=True)), 2.4, None
        )
        balance = local_energy_balance(traj, phi, 0.0, end)
        scale = max(abs(balance.lhs), abs(balance.rhs))
        worst = max(worst, abs(balance.residual) / scale if scale else 0.0)
    # a spatially and temporally constant test function is the global balance
    flat = TestFunctionSpec(0.0, center, None, None)
    local = local_energy_balance(traj, flat, 0.0, end).residual
    strong = strong_energy_residual(traj, 0.0, end)
    gap = abs(local - strong)
    return CriterionResult(
        "local-energy",
        worst <= 1e-4 and gap <= 1e-12,
        {"worst_relative_residual": worst, "placements": len(offsets), "degeneracy_gap": gap},
    )


def check_scale_invariance(opts: VerifyOptions) -> CriterionResult:
    n = 16 if opts.quick else 32
    grid = TorusGrid(n, TWO_PI)
    u0 = _ensemble(grid, 1, opts.seed)[0] * 0.5
    traj = run(u0, grid, SolverConfig(dt=2e-3, t_end=0.2, snapshot_stride=5))
    scaled = traj.rescaled(2.0)
    sign_error = opts.canary == "m-sign"
    cylinders = [
        ParabolicCylinder(t, (math.pi + dx, math.pi - dx, math.pi), r)
        for t in (0.1, 0.15, 0.2)
        for dx, r in ((0.0, 0.25), (0.3, 0.3), (-0.5, 0.2))
    ] + [ParabolicCylinder(0.2, (2.5, 3.5, 3.0), 0.4)]
    worst = 0.0
    for cyl in cylinders:
        m = M_functional(traj, cyl, sign_error=sign_error).total
        small = ParabolicCylinder(cyl.t / 4, tuple(c / 2 for c in cyl.x), cyl.r / 2)  # type: ignore[arg-type]
        m2 = M_functional(scaled, small, sign_error=sign_error).total
        worst = max(worst, abs(m2 - m) / m if m else abs(m2))
    return CriterionResult(
        "scale-invariance",
        worst <= 1e-8,
        {"cylinders": len(cylinders), "max_relative_deviation": worst},
        "sign-error canary active" if sign_error else "",
    )


def check_mu_monotonicity(opts: VerifyOptions) -> CriterionResult:
    n = 16 if opts.quick else 32
    grid = TorusGrid(n, TWO_PI)
    count = 3 if opts.quick else 10
    x = grid.center
    mus = mu_ladder(grid)
    monotone = True
    worst_gap = 0.0
    for u in _ensemble(grid, count, opts.seed + 1):
        snap = FieldSnapshot.from_velocity(grid, u)
        for functional in (weighted_E, weighted_D):
            values = [functional(snap, WeightSpec(x, mu)) for mu in mus]
            # mus are decreasing, so values must not decrease
            monotone &= all(b >= a for a, b in zip(values, values[1:], strict=False))
        ladder = tuple(weighted_E(snap, WeightSpec(x, mu)) for mu in mus)
        exact = weighted_E(snap, WeightSpec(x, 0.0))
        worst_gap = max(worst_gap, abs(mu_ladder_extrapolate(mus, ladder) - exact) / exact)
    return CriterionResult(
        "mu-monotonicity",
        monotone and worst_gap <= 5e-3,
        {"fields": count, "monotone": monotone, "max_extrapolation_gap": worst_gap},
    )


def check_closed_forms(opts: VerifyOptions) -> CriterionResult:
    grid = TorusGrid(32, TWO_PI)
    radius = 2.0
    center = grid.center
    root = np.sqrt(ball_indicator(grid, center, radius))
    one = np.zeros((3, *grid.shape))
    one[0] = root
    snap = FieldSnapshot.from_velocity(grid, one, validate=False)
    target = 2 * math.pi * radius**2
    e_err = abs(weighted_E(snap, WeightSpec(center, 0.0)) - target) / target
    psi_err = abs(psi(one, np.zeros_like(one), grid, center) - target) / target
    three = np.stack([root, root, root])
    gauge = weighted_data_norm(three, grid)
    l_err = abs(gauge.L**2 - 3 * target) / (3 * target)
    worst = max(e_err, psi_err, l_err)
    return CriterionResult(
        "closed-forms",
        worst <= 0.01,
        {"weighted_E": e_err, "psi": psi_err, "data_norm": l_err},
    )


def check_psi_decay(opts: VerifyOptions) -> CriterionResult:
    grid = TorusGrid(16 if opts.quick else 32, TWO_PI)
    u0 = jump_field(grid, grid.box_length / 8)
    schedule = MollifierSchedule.geometric(grid, 6)
    c = grid.center
    points = [c, (c[0] + 0.4, c[1], c[2]), (c[0], c[1] - 0.4, c[2]), (c[0], c[1], c[2] + 0.8)]
    medians = psi_sequence(u0, grid, schedule, points).medians()
    decreasing = bool(np.all(np.diff(medians) < 0))
    region = BallRegion(c, grid.box_length / 4)
    ratios = [hls_ratio(u0, grid, schedule, k, region, 2.0) for k in range(len(schedule))]
    values = np.array([r.value for r in ratios])
    defined = all(r.defined for r in ratios)
    bounded = defined and float(values.max()) <= 2 * float(np.median(values))
    return CriterionResult(
        "psi-decay-hls",
        decreasing and bounded,
        {"medians": medians.tolist(), "hls_ratios": values.tolist()},
    )


def check_interpolation(opts: VerifyOptions) -> CriterionResult:
    grid = TorusGrid(16, TWO_PI)
    count = 10 if opts.quick else 100
    x = grid.center
    fields_ = [FieldSnapshot.from_velocity(grid, u) for u in _ensemble(grid, count, opts.seed + 2)]
    spread = 0.0
    for exps in ADMISSIBLE_EXPONENTS:
        values = np.array([interpolation_ratio(s, exps, x).value for s in fields_])
        spread = max(spread, float(values.max() / np.median(values)))
    first = fields_[0]
    dilated = FieldSnapshot.from_spectral(
        grid.rescaled(2.0), 2.0 * first.spectral_velocity, 0.0, validate=False
    )
    half_x = tuple(c / 2 for c in x)
    dilation = max(
        abs(
            interpolation_ratio(dilated, e, half_x).value  # type: ignore[arg-type]
            / interpolation_ratio(first, e, x).value
            - 1
        )
        for e in ADMISSIBLE_EXPONENTS
    )
    return CriterionResult(
        "interpolation",
        spread <= 3 and dilation <= 1e-8,
        {"fields": count, "max_ratio_over_median": spread, "dilation_deviation": dilation},
    )


def check_budget_schedule(opts: VerifyOptions) -> CriterionResult:
    grid = TorusGrid(16 if opts.quick else 32, TWO_PI)
    cfg = SolverConfig(dt=2.5e-3 if opts.quick else 1e-3, t_end=0.25, snapshot_stride=5)
    v0 = taylor_green(grid, 0.05)
    u0 = v0 + divergence_free_bump(grid, grid.center, 0.6, 1e-3)
    u_traj = run(u0, grid, cfg)
    v_traj = run(v0, grid, cfg)
    x = grid.center
    c = Constants()
    budget = weighted_budget(u_traj, v_traj, x, 0.0, c.mass_constant_c)
    t_star = budget.t_star
    delta = lemma41_delta(u_traj, x, t_star.t_star, c.epsilon1, c.mass_constant_c)
    schedule = theorem_TI_schedule(
        u_traj,
        x,
        t_star.t_star,
        c.mass_constant_c,
        delta=delta.delta,
        epsilon1=c.epsilon1,
        c0=c.c0,
        s_count=10,
    )
    # the same pair restarted at sigma: t_star becomes a duration after it
    sigma = 0.1
    shifted = weighted_budget(u_traj, v_traj, x, 0.0, c.mass_constant_c, sigma).t_star
    shifted_delta = lemma41_delta(
        u_traj, x, shifted.t_star, c.epsilon1, c.mass_constant_c, sigma
    )
    shifted_schedule = theorem_TI_schedule(
        u_traj,
        x,
        shifted.t_star,
        c.mass_constant_c,
        delta=shifted_delta.delta,
        epsilon1=c.epsilon1,
        c0=c.c0,
        s_count=10,
        sigma=sigma,
    )
    covers = t_star.certified and abs(t_star.t_star - u_traj.end) <= 1e-12
    covers &= abs(shifted.t_star - (u_traj.end - sigma)) <= 1e-12
    passed = (
        budget.hp_holds
        and bool(np.all(budget.hpn_holds))
        and covers
        and delta.delta >= SCHEDULE_MIN_DELTA
        and schedule.available
        and schedule.pass_count == 10
        and shifted_schedule.pass_count == 10
    )
    return CriterionResult(
        "budget-schedule",
        passed,
        {
            "hp": budget.hp_holds,
            "t_star": t_star.t_star,
            "delta": delta.delta,
            "schedule_passes": schedule.pass_count,
            "shifted_schedule_passes": shifted_schedule.pass_count,
        },
        t_star.reason,
    )


def _line_samples(length: float, step: float) -> list[tuple[float, tuple[float, float, float]]]:
    count = int(round(length / step)) + 1
    return [(1.0, (1.0 + i * step, 2.0, 2.0)) for i in range(count)]


def _staggered_samples() -> list[tuple[float, tuple[float, float, float]]]:
    """A short segment failing at several times, spread wider than one cluster."""
    return [
        (t, (2.0 + i * 0.05, 2.0, 2.0))
        for t in (0.0, 0.02, 0.05, 0.5, 1.0)
        for i in range(5)
    ]


def _sound(samples: list, cover: Covering) -> bool:
    return all(
        cover.cylinders[owner].contains(t, x)
        for (t, x), owner in zip(samples, cover.assignments, strict=True)
    )


def check_covering(opts: VerifyOptions) -> CriterionResult:
    length, rho = 2.0, 0.1
    measured: dict = {}
    sound = True
    sums = []
    for step in (0.01, 0.005):
        samples = _line_samples(length, step)
        cover = singular_candidates(samples, rho, rho)
        sound &= _sound(samples, cover)
        sums.append(cover.sum_r)
        measured[f"step_{step}"] = {"count": cover.count, "sum_r": cover.sum_r}
    staggered = _staggered_samples()
    staggered_cover = singular_candidates(staggered, rho, rho)
    sound &= _sound(staggered, staggered_cover)
    measured["staggered"] = {"count": staggered_cover.count, "sum_r": staggered_cover.sum_r}
    estimate = length / 2
    close = abs(sums[0] - estimate) <= 0.25 * estimate
    stable = sums[1] <= 1.1 * sums[0]
    empty = singular_candidates([], rho).sum_r == 0
    return CriterionResult(
        "covering",
        sound and close and stable and empty,
        measured | {"estimate": estimate, "sound": sound},
    )


def determinism_config() -> RunConfig:
    c = math.pi
    return RunConfig(
        grid=GridSection(16, TWO_PI),
        solver=SolverConfig(dt=1e-3, t_end=0.05, snapshot_stride=10),
        sampling=Sampling(points=((c, c, c), (c + 0.5, c, c - 0.5)), r_sequence=(0.2, 0.15)),
    )


def check_determinism(opts: VerifyOptions) -> CriterionResult:
    cfg = determinism_config()
    grid = TorusGrid(cfg.grid.n_per_axis, cfg.grid.box_length)
    traj = run(taylor_green(grid, 0.05), grid, cfg.solver)
    texts = [
        dumps(analyze_trajectory(traj, replace(cfg, threads=n)).to_dict())
        for n in (1, max(2, opts.threads))
    ]
    return CriterionResult(
        "determinism",
        texts[0] == texts[1],
        {"bytes": len(texts[0]), "threads": [1, max(2, opts.threads)]},
    )


CRITERIA: dict[str, Callable[[VerifyOptions], CriterionResult]] = {
    "pressure-oracle": check_pressure_oracle,
    "energy-equality": check_energy_equality,
    "local-energy": check_local_energy,
    "scale-invariance": check_scale_invariance,
    "mu-monotonicity": check_mu_monotonicity,
    "closed-forms": check_closed_forms,
    "psi-decay-hls": check_psi_decay,
    "interpolation": check_interpolation,
    "budget-schedule": check_budget_schedule,
    "covering": check_covering,
    "determinism": check_determinism,
}


def run_suite(
    opts: VerifyOptions, only: list[str] | None = None
) -> list[CriterionResult]:
    """Run the selected criteria in their fixed order; each ID appears once."""
    selected = list(CRITERIA) if not only else list(dict.fromkeys(only))
    unknown = [i for i in selected if i not in CRITERIA]
    if unknown:
        raise RejectedInputError(f"unknown criterion id(s): {', '.join(unknown)}")
    results = []
    for cid in CRITERIA:
        if cid not in selected:
            continue
        logger.info("Checking %s", cid)
        try:
            result = CRITERIA[cid](opts)
        except Exception as exc:  # a crashing check is a failed check
            logger.exception("Criterion %s raised", cid)
            result = CriterionResult(cid, False, detail=f"{type(exc).__name__}: {exc}")
        logger.info("%s: %s", cid, "pass" if result.passed else "FAIL")
        results.append(result)
    return results
