"""Run configuration: YAML file, environment overrides, canonical hash.

A run file looks like::

    grid: {n_per_axis: 16, box_length: 6.283185307179586}
    solver: {dt: 0.001, t_end: 0.25, snapshot_stride: 10}
    initial: {kind: taylor_green, amplitude: 0.05}
    constants: {epsilon1: 0.05, mass_constant_c: 1.0}
    sampling: {points: [[3.14159, 3.14159, 3.14159]], r_sequence: [0.5, 0.35]}
    seed: 7

Every section is optional; omitted keys take the defaults below. Only
``CKN_OUT_DIR`` and ``CKN_THREADS`` are read from the environment (``.env`` is
honored through python-dotenv).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml
from dotenv import load_dotenv

from .errors import ConfigError

logger = logging.getLogger(__name__)

INITIAL_KINDS = ("zero", "taylor_green", "random", "jump", "bump")

# Excluded from the canonical form: they must never change an output byte.
RUNTIME_ONLY_KEYS = frozenset({"threads", "out_dir"})


@dataclass(frozen=True)
class GridSection:
    n_per_axis: int = 16
    box_length: float = 2 * math.pi


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping controls; viscosity is fixed at 1."""

    dt: float = 1e-3
    t_end: float = 0.25
    dealias: float = 2 / 3
    snapshot_stride: int = 10
    cfl_cap: float = 1.0

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class InitialSection:
    """Initial velocity recipe.

    ``bump_amplitude`` adds a divergence-free Gaussian bump on top of ``kind``;
    ``band`` is the largest integer wavenumber used by ``random``.
    """

    kind: str = "taylor_green"
    amplitude: float = 0.05
    bump_amplitude: float = 0.0
    bump_width: float = 0.6
    band: int = 3


@dataclass(frozen=True)
class Constants:
    """Absolute constants of the regularity criteria.

    None of them has a value fixed by theory: they are uncalibrated defaults and
    every report echoes them.
    """

    epsilon1: float = 0.05
    epsilon3: float = 0.05
    c0: float = 1.0
    mass_constant_c: float = 1.0
    L0: float = 1.0
    eta: float = 1e-3
    epsilon_measure: float = 0.01
    budget_mu: float = 0.0


@dataclass(frozen=True)
class Sampling:
    """Where criteria are evaluated.

    ``points`` lists explicit centers; ``lattice_stride > 0`` adds every
    stride-th grid node of the box core. With neither, the box center is used.
    ``sigma`` is the start time of the comparison run and of the decay
    schedule; it must be a snapshot time.
    """

    points: tuple[tuple[float, float, float], ...] = ()
    lattice_stride: int = 0
    t_stride: int = 1
    r_sequence: tuple[float, ...] = (0.5, 0.4, 0.3)
    s_count: int = 10
    schedule_count: int = 6
    sigma: float = 0.0


@dataclass(frozen=True)
class Tolerances:
    div_tol: float = 1e-10
    roundtrip_tol: float = 1e-12
    zero_tol: float = 1e-24


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverConfig = field(default_factory=SolverConfig)
    initial: InitialSection = field(default_factory=InitialSection)
    constants: Constants = field(default_factory=Constants)
    sampling: Sampling = field(default_factory=Sampling)
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    threads: int = 1
    out_dir: str = "runs"

    def canonical(self) -> str:
        """Canonical JSON of every output-relevant setting."""
        data = {k: v for k, v in asdict(self).items() if k not in RUNTIME_ONLY_KEYS}
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def constants_echo(self) -> dict[str, float]:
        c = self.constants
        return {
            "epsilon1": c.epsilon1,
            "epsilon3": c.epsilon3,
            "c0": c.c0,
            "c": c.mass_constant_c,
            "L0": c.L0,
        }


_SECTIONS: dict[str, type] = {
    "grid": GridSection,
    "solver": SolverConfig,
    "initial": InitialSection,
    "constants": Constants,
    "sampling": Sampling,
    "tolerances": Tolerances,
}


def _coerce(value: Any, default: Any, key: str) -> Any:
    """Coerce a YAML scalar/list to the type of the field's default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", key)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, int | float):
            raise ConfigError(f"expected a number, got {value!r}", key)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key)
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list | tuple):
            raise ConfigError(f"expected a list, got {value!r}", key)
        if key.endswith("points"):
            points = []
            for i, item in enumerate(value):
                if not isinstance(item, list | tuple) or len(item) != 3:
                    raise ConfigError(f"expected a 3-vector, got {item!r}", f"{key}[{i}]")
                points.append(
                    tuple(_coerce(c, 0.0, f"{key}[{i}]") for c in item)
                )
            return tuple(points)
        return tuple(_coerce(v, 0.0, f"{key}[{i}]") for i, v in enumerate(value))
    raise ConfigError(f"unsupported value {value!r}", key)


def _build_section(name: str, raw: Any) -> Any:
    cls = _SECTIONS[name]
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError("expected a mapping", name)
    defaults = cls()
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError("unknown key", f"{name}.{key}")
    kwargs = {
        key: _coerce(value, getattr(defaults, key), f"{name}.{key}")
        for key, value in raw.items()
    }
    return cls(**kwargs)


def validate(cfg: RunConfig) -> RunConfig:
    """Check cross-field invariants; raise ConfigError naming the first bad key."""
    g, s, c = cfg.grid, cfg.solver, cfg.constants
    if g.n_per_axis < 8 or g.n_per_axis % 2:
        raise ConfigError("must be even and >= 8", "grid.n_per_axis")
    if g.box_length <= 0:
        raise ConfigError("must be positive", "grid.box_length")
    for key in ("dt", "t_end", "cfl_cap"):
        if getattr(s, key) <= 0:
            raise ConfigError("must be positive", f"solver.{key}")
    if not 0 < s.dealias <= 1:
        raise ConfigError("must lie in (0, 1]", "solver.dealias")
    if s.snapshot_stride < 1:
        raise ConfigError("must be a positive integer", "solver.snapshot_stride")
    if cfg.initial.kind not in INITIAL_KINDS:
        raise ConfigError(
            f"must be one of {', '.join(INITIAL_KINDS)}", "initial.kind"
        )
    for key in ("epsilon1", "epsilon3", "budget_mu"):
        if getattr(c, key) < 0:
            raise ConfigError("must be nonnegative", f"constants.{key}")
    for key in ("c0", "mass_constant_c", "L0", "eta", "epsilon_measure"):
        if getattr(c, key) <= 0:
            raise ConfigError("must be positive", f"constants.{key}")
    smp = cfg.sampling
    if smp.lattice_stride < 0:
        raise ConfigError("must be nonnegative", "sampling.lattice_stride")
    if smp.t_stride < 1:
        raise ConfigError("must be a positive integer", "sampling.t_stride")
    if not smp.r_sequence or any(r <= 0 for r in smp.r_sequence):
        raise ConfigError("must be a nonempty list of positive radii", "sampling.r_sequence")
    if smp.s_count < 1 or smp.schedule_count < 1:
        raise ConfigError("must be a positive integer", "sampling.s_count")
    if not 0 <= smp.sigma < s.t_end:
        raise ConfigError("must lie in [0, solver.t_end)", "sampling.sigma")
    for i, point in enumerate(smp.points):
        if any(not 0 <= coord <= g.box_length for coord in point):
            raise ConfigError("point lies outside the box", f"sampling.points[{i}]")
    tol = cfg.tolerances
    for key in ("div_tol", "roundtrip_tol", "zero_tol"):
        if getattr(tol, key) <= 0:
            raise ConfigError("must be positive", f"tolerances.{key}")
    if cfg.threads < 1:
        raise ConfigError("must be a positive integer", "threads")
    return cfg


def config_from_dict(raw: dict[str, Any]) -> RunConfig:
    """Build and validate a RunConfig from a parsed mapping."""
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    allowed = set(_SECTIONS) | {"seed", "threads", "out_dir"}
    for key in raw:
        if key not in allowed:
            raise ConfigError("unknown key", str(key))
    sections = {name: _build_section(name, raw.get(name)) for name in _SECTIONS}
    defaults = RunConfig()
    scalars = {
        key: _coerce(raw[key], getattr(defaults, key), key)
        for key in ("seed", "threads", "out_dir")
        if key in raw
    }
    return validate(RunConfig(**sections, **scalars))


def load_config(path: str | Path | None) -> RunConfig:
    """Load a YAML run file (None gives the defaults) and apply env overrides."""
    if path is None:
        cfg = validate(RunConfig())
    else:
        text = Path(path).read_text()
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse YAML: {exc}") from exc
        cfg = config_from_dict(raw)
    return apply_env(cfg)


def apply_env(cfg: RunConfig) -> RunConfig:
    """Apply CKN_OUT_DIR / CKN_THREADS from the environment or a .env file."""
    load_dotenv(override=False)
    updates: dict[str, Any] = {}
    out_dir = os.getenv("CKN_OUT_DIR", "")
    if out_dir:
        updates["out_dir"] = out_dir
    threads = os.getenv("CKN_THREADS", "")
    if threads:
        try:
            updates["threads"] = int(threads)
        except ValueError as exc:
            raise ConfigError(f"expected an integer, got {threads!r}", "CKN_THREADS") from exc
    if updates:
        logger.debug("Environment overrides: %s", sorted(updates))
        cfg = validate(replace(cfg, **updates))
    return cfg


def dump_config(cfg: RunConfig) -> dict[str, Any]:
    """Plain-dict echo of the full config for manifests and reports."""
    return asdict(cfg)
