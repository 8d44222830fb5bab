"""Tests for run configuration loading and validation."""

import json

import pytest

from landau_lab.config import ConfigError, RunConfig, config_hash, dump_config, load_config, parse_config


def test_defaults_describe_the_desk_slab() -> None:
	config = parse_config({})
	assert config.domain.kind == "slab"
	assert config.schedule.epsilon == pytest.approx(0.2)
	assert config.grid.h_v == pytest.approx(2 * 8.0 / 24)
	schedule = config.schedule.to_schedule()
	assert schedule.n_max == config.schedule.n


def test_out_of_range_a_reports_dotted_path() -> None:
	with pytest.raises(ConfigError) as excinfo:
		parse_config({"schedule": {"a_list": [0.5, 1.5]}})
	assert excinfo.value.path == "schedule.a_list"

	with pytest.raises(ConfigError) as excinfo:
		parse_config({"schedule": {"a": 1.5}})
	assert excinfo.value.path == "schedule.a"


def test_rejects_unknown_keys_and_bad_grids() -> None:
	with pytest.raises(ConfigError, match="grid"):
		parse_config({"grid": {"nv": 7}})
	with pytest.raises(ConfigError):
		parse_config({"schedule": {"espilon": 0.1}})
	with pytest.raises(ConfigError, match="epsilon"):
		parse_config({"schedule": {"epsilon_list": [0.1, 0.2]}})


def test_curved_domains_only_for_flatten_and_geometry() -> None:
	with pytest.raises(ConfigError, match="slab"):
		parse_config({"domain": {"kind": "ball", "params": {}}})
	config = parse_config({"domain": {"kind": "ball", "params": {}}, "scenario": "geometry"})
	assert config.domain.kind == "ball"


def test_yaml_round_trip_keeps_hash(tmp_path) -> None:
	config = parse_config({"seed": 3, "schedule": {"epsilon": 0.15}})
	path = tmp_path / "run.yaml"
	path.write_text(dump_config(config), encoding="utf-8")

	loaded = load_config(path)
	assert loaded == config
	assert config_hash(loaded) == config_hash(config)
	assert config_hash(loaded) != config_hash(RunConfig())


def test_load_config_json_and_errors(tmp_path) -> None:
	good = tmp_path / "run.json"
	good.write_text(json.dumps({"scenario": "flatten"}), encoding="utf-8")
	assert load_config(good).scenario == "flatten"

	with pytest.raises(ConfigError, match="cannot read"):
		load_config(tmp_path / "missing.yaml")

	listing = tmp_path / "list.yaml"
	listing.write_text("- 1\n- 2\n", encoding="utf-8")
	with pytest.raises(ConfigError, match="mapping"):
		load_config(listing)

	other = tmp_path / "run.toml"
	other.write_text("seed = 1\n", encoding="utf-8")
	with pytest.raises(ConfigError, match="unsupported"):
		load_config(other)
