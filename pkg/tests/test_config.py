"""Tests for run configuration loading and validation."""

import math

import pytest

from ckn_lab.config import (
    RunConfig,
    apply_env,
    config_from_dict,
    dump_config,
    load_config,
)
from ckn_lab.errors import ConfigError


class TestDefaults:
    def test_defaults_validate(self):
        cfg = load_config(None)
        assert cfg.grid.n_per_axis == 16
        assert cfg.grid.box_length == pytest.approx(2 * math.pi)
        assert cfg.initial.kind == "taylor_green"
        assert cfg.threads == 1

    def test_steps(self):
        assert config_from_dict({"solver": {"dt": 0.01, "t_end": 0.1}}).solver.steps == 10

    def test_constants_echo(self):
        echo = RunConfig().constants_echo()
        assert set(echo) == {"epsilon1", "epsilon3", "c0", "c", "L0"}


class TestValidation:
    def test_unknown_section_key(self):
        with pytest.raises(ConfigError, match="grid.cells") as exc:
            config_from_dict({"grid": {"cells": 16}})
        assert exc.value.key == "grid.cells"

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError) as exc:
            config_from_dict({"grids": {}})
        assert exc.value.key == "grids"

    @pytest.mark.parametrize("n", [6, 15])
    def test_odd_or_small_grid(self, n):
        with pytest.raises(ConfigError) as exc:
            config_from_dict({"grid": {"n_per_axis": n}})
        assert exc.value.key == "grid.n_per_axis"

    def test_type_error_names_key(self):
        with pytest.raises(ConfigError, match="expected an integer") as exc:
            config_from_dict({"grid": {"n_per_axis": 16.5}})
        assert exc.value.key == "grid.n_per_axis"

    def test_integer_accepted_for_float(self):
        assert config_from_dict({"solver": {"t_end": 1}}).solver.t_end == 1.0

    def test_unknown_initial_kind(self):
        with pytest.raises(ConfigError, match="initial.kind"):
            config_from_dict({"initial": {"kind": "vortex"}})

    def test_points_must_be_three_vectors(self):
        with pytest.raises(ConfigError) as exc:
            config_from_dict({"sampling": {"points": [[1.0, 2.0]]}})
        assert exc.value.key == "sampling.points[0]"

    def test_point_outside_box(self):
        with pytest.raises(ConfigError, match="outside the box"):
            config_from_dict({"sampling": {"points": [[1.0, 2.0, 9.0]]}})

    def test_zero_epsilon_allowed(self):
        cfg = config_from_dict({"constants": {"epsilon1": 0}})
        assert cfg.constants.epsilon1 == 0.0

    @pytest.mark.parametrize("sigma", [-0.1, 5.0])
    def test_sigma_outside_run(self, sigma):
        raw = {"solver": {"t_end": 1.0}, "sampling": {"sigma": sigma}}
        with pytest.raises(ConfigError) as exc:
            config_from_dict(raw)
        assert exc.value.key == "sampling.sigma"

    def test_top_level_must_be_mapping(self):
        with pytest.raises(ConfigError, match="mapping"):
            config_from_dict([1, 2])  # type: ignore[arg-type]


class TestFiles:
    def test_yaml_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(
            "grid: {n_per_axis: 8}\n"
            "solver: {dt: 0.01, t_end: 0.05, snapshot_stride: 1}\n"
            "initial: {kind: zero}\n"
            "sampling: {points: [[3.0, 3.0, 3.0]], r_sequence: [0.5]}\n"
            "seed: 7\n"
        )
        cfg = load_config(path)
        assert cfg.grid.n_per_axis == 8
        assert cfg.sampling.points == ((3.0, 3.0, 3.0),)
        assert cfg.sampling.r_sequence == (0.5,)
        assert cfg.seed == 7

    def test_unparseable_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("grid: {n_per_axis: [\n")
        with pytest.raises(ConfigError, match="cannot parse YAML"):
            load_config(path)

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_config(path).config_hash == RunConfig().config_hash

    def test_dump_round_trip(self):
        cfg = config_from_dict({"grid": {"n_per_axis": 8}, "seed": 3})
        again = config_from_dict(dump_config(cfg))
        assert again == cfg


class TestEnvironment:
    def test_overrides(self, monkeypatch):
        monkeypatch.setenv("CKN_OUT_DIR", "/tmp/elsewhere")
        monkeypatch.setenv("CKN_THREADS", "4")
        cfg = apply_env(RunConfig())
        assert cfg.out_dir == "/tmp/elsewhere"
        assert cfg.threads == 4

    def test_bad_thread_count(self, monkeypatch):
        monkeypatch.setenv("CKN_THREADS", "many")
        with pytest.raises(ConfigError) as exc:
            apply_env(RunConfig())
        assert exc.value.key == "CKN_THREADS"

    def test_runtime_keys_do_not_change_hash(self, monkeypatch):
        monkeypatch.setenv("CKN_THREADS", "3")
        monkeypatch.setenv("CKN_OUT_DIR", "/tmp/other")
        assert apply_env(RunConfig()).config_hash == RunConfig().config_hash
