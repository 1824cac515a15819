"""Perturbation budget between a trajectory and its smooth comparison run.

With w = u - v the budget tracks E(w, t), the running integral of D(w) and the
forcing H(v, t) = c int ||grad v||^4 + c int E(v) D(v), all weighted at x.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import RejectedInputError
from .fields import FieldSnapshot
from .grid import FloatArray
from .solver import Trajectory
from .weighted import WeightSpec, weighted_D, weighted_E

logger = logging.getLogger(__name__)


def threshold(c: float) -> float:
    """Smallness threshold 1/(4c)^2 for E(w, 0) and H."""
    return 1.0 / (4 * c) ** 2


def working_bound(c: float) -> float:
    """Bound 1/(8c^2) that E(w) + 1/2 int D(w) must respect while certified."""
    return 1.0 / (8 * c * c)


@dataclass(frozen=True)
class TStar:
    t_star: float
    certified: bool
    reason: str = ""
    violation_time: float | None = None


def estimate_t_star(
    times: FloatArray,
    w_energy: FloatArray,
    w_dissipation: FloatArray,
    h_term: FloatArray,
    c: float,
) -> TStar:
    """Forward scan for the last time the budget certificate still holds.

    The certificate needs E(w, 0) < 1/(4c)^2 at the start, and at every
    scanned time E(w) + 1/2 int D(w) < 1/(8c^2) with H < 1/(4c)^2. The scan
    stops at the first violation.
    """
    thr = threshold(c)
    bound = working_bound(c)
    if not w_energy[0] < thr:
        return TStar(0.0, False, "no certificate: E(w, 0) above threshold", float(times[0]))
    last = None
    for i, t in enumerate(times):
        if not (w_energy[i] + 0.5 * w_dissipation[i] < bound and h_term[i] < thr):
            if last is None:
                return TStar(0.0, False, "no certificate: budget fails at t = 0", float(t))
            return TStar(float(times[last]), True, "budget exceeded", float(t))
        last = i
    return TStar(float(times[-1]), True, "certified to run end")


@dataclass(frozen=True, eq=False)
class PerturbationBudget:
    x: tuple[float, float, float]
    mu: float
    c: float
    times: FloatArray
    w_energy: FloatArray
    w_dissipation: FloatArray
    H_term: FloatArray
    t_star: TStar
    sigma: float = 0.0

    @property
    def threshold(self) -> float:
        return threshold(self.c)

    @property
    def working_bound(self) -> float:
        return working_bound(self.c)

    @property
    def hp_holds(self) -> bool:
        """E(w, 0) below threshold."""
        return bool(self.w_energy[0] < self.threshold)

    @property
    def hpn_holds(self) -> FloatArray:
        """H(t) below threshold, per snapshot."""
        return self.H_term < self.threshold

    def flags(self) -> dict:
        return {
            "hp": self.hp_holds,
            "hpn_all": bool(np.all(self.hpn_holds)),
            "certified": self.t_star.certified,
            "reason": self.t_star.reason,
        }


def _difference(a: FieldSnapshot, b: FieldSnapshot) -> FieldSnapshot:
    return FieldSnapshot.from_spectral(
        a.grid,
        a.spectral_velocity - b.spectral_velocity,
        a.time,
        a.pressure - b.pressure,
        validate=False,
    )


def _paired_from(
    u_traj: Trajectory, v_traj: Trajectory, sigma: float
) -> tuple[tuple[FieldSnapshot, ...], tuple[FieldSnapshot, ...]]:
    """Snapshots of both runs from sigma on; the two must share those times."""
    if u_traj.grid != v_traj.grid:
        raise RejectedInputError("trajectories live on different grids")
    u_snaps = tuple(u_traj.snapshots[i] for i in u_traj.indices_between(sigma, u_traj.end))
    v_snaps = tuple(v_traj.snapshots[i] for i in v_traj.indices_between(sigma, v_traj.end))
    u_times = [s.time for s in u_snaps]
    if not u_snaps or u_times != [s.time for s in v_snaps]:
        raise RejectedInputError("trajectories are sampled at different times")
    if abs(u_times[0] - sigma) > 1e-9 * max(1.0, sigma):
        raise RejectedInputError(f"sigma={sigma} is not a snapshot time")
    return u_snaps, v_snaps


def weighted_budget(
    u_traj: Trajectory,
    v_traj: Trajectory,
    x: tuple[float, float, float],
    mu: float,
    c: float,
    sigma: float = 0.0,
) -> PerturbationBudget:
    """Evaluate the perturbation budget at x; mu = 0 uses the singular cell.

    The comparison run starts at ``sigma``: both runs are paired from that
    snapshot on and t_star is measured as a duration after it.
    """
    if c <= 0:
        raise RejectedInputError(f"mass constant must be positive, got {c}")
    u_snaps, v_snaps = _paired_from(u_traj, v_traj, sigma)
    spec = WeightSpec(x, mu)
    times = np.array([s.time for s in u_snaps]) - sigma
    w_e, w_d, v_e, v_d, v_g4 = [], [], [], [], []
    for su, sv in zip(u_snaps, v_snaps, strict=True):
        w = _difference(su, sv)
        w_e.append(weighted_E(w, spec))
        w_d.append(weighted_D(w, spec))
        v_e.append(weighted_E(sv, spec))
        v_d.append(weighted_D(sv, spec))
        v_g4.append(sv.dissipation**2)
    w_energy = np.array(w_e)
    w_diss = integrate.cumulative_trapezoid(w_d, times, initial=0)
    h_term = c * (
        integrate.cumulative_trapezoid(v_g4, times, initial=0)
        + integrate.cumulative_trapezoid(np.multiply(v_e, v_d), times, initial=0)
    )
    t_star = estimate_t_star(times, w_energy, w_diss, h_term, c)
    if not t_star.certified:
        logger.warning("No budget certificate at x=%s: %s", x, t_star.reason)
    return PerturbationBudget(
        tuple(float(v) for v in x),  # type: ignore[arg-type]
        mu,
        c,
        times,
        w_energy,
        w_diss,
        h_term,
        t_star,
        sigma,
    )


def weighted_quantity_series(
    traj: Trajectory, x: tuple[float, float, float]
) -> tuple[FloatArray, FloatArray]:
    """E(u, t, x, 0) and D(u, t, x, 0) at every snapshot (singular cell)."""
    spec = WeightSpec(x, 0.0)
    e = np.array([weighted_E(s, spec) for s in traj.snapshots])
    d = np.array([weighted_D(s, spec) for s in traj.snapshots])
    return e, d

