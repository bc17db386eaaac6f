"""Tests for JSON config parsing, validation, and serialization."""

import json

import numpy as np
import pytest

from softgrasp.config import (
    Config,
    GripSearch,
    LandingSampling,
    LandingSearch,
    ScheduleConfig,
    SurrogateTraining,
    config_to_dict,
    parse_config,
    serialize_config,
)
from softgrasp.errors import ConfigError


def _write(tmp_path, tree):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(tree), encoding="utf-8")
    return path


class TestDefaults:
    def test_default_config_validates(self):
        config = Config()
        assert config.schema_version == 1
        assert config.scenario.t_a < config.scenario.t_g
        assert config.landing.n_samples == 500
        assert config.surrogate.train_seeds == (0, 1, 2)
        assert config.search.lower < config.search.upper

    def test_minimal_file_fills_defaults(self, tmp_path):
        path = _write(tmp_path, {"scenario": {"target_centroid": [1.0, 2.0, 0.5]}})
        config = parse_config(path)
        assert np.allclose(config.scenario.target_centroid, [1.0, 2.0, 0.5])
        # everything else keeps its default
        assert config.scenario.t_g == Config().scenario.t_g
        assert config.grip.max_iters == GripSearch().max_iters
        assert config.collision.vertical_speed < 0

    def test_empty_object_is_the_default_config(self, tmp_path):
        path = _write(tmp_path, {})
        assert serialize_config(parse_config(path)) == serialize_config(Config())


class TestRoundTrip:
    def test_serialize_parse_identity(self, tmp_path):
        config = Config()
        text = serialize_config(config)
        path = tmp_path / "config.json"
        path.write_text(text, encoding="utf-8")
        again = serialize_config(parse_config(path))
        assert again == text

    def test_serialized_text_is_deterministic(self):
        assert serialize_config(Config()) == serialize_config(Config())

    def test_round_trip_preserves_overrides(self, tmp_path):
        tree = {
            "scenario": {"grasp_speed": 0.7, "gains": {"k_p": 12.5}},
            "landing": {"n_samples": 64, "seed": 3},
            "surrogate": {"hidden": [32, 32], "epochs": 17},
            "search": {"warm_start": False},
        }
        config = parse_config(_write(tmp_path, tree))
        assert config.scenario.grasp_speed == 0.7
        assert config.scenario.gains.k_p == 12.5
        assert config.landing.n_samples == 64
        assert config.surrogate.hidden == (32, 32)
        assert config.search.warm_start is False
        text = serialize_config(config)
        path = tmp_path / "round.json"
        path.write_text(text, encoding="utf-8")
        assert serialize_config(parse_config(path)) == text

    def test_config_to_dict_is_json_clean(self):
        tree = config_to_dict(Config())
        json.dumps(tree)  # raises on non-serializable leaves
        assert tree["schema_version"] == 1
        assert isinstance(tree["scenario"]["target_centroid"], list)
        assert isinstance(tree["surrogate"]["hidden"], list)


class TestRejection:
    def test_unknown_top_level_key(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown config key 'scnario'"):
            parse_config(_write(tmp_path, {"scnario": {}}))

    def test_unknown_nested_key_names_full_path(self, tmp_path):
        with pytest.raises(ConfigError,
                           match="unknown config key 'scenario.gians'"):
            parse_config(_write(tmp_path, {"scenario": {"gians": {}}}))

    def test_negative_gain_names_dotted_path(self, tmp_path):
        tree = {"scenario": {"gains": {"k_p": -1.0}}}
        with pytest.raises(ConfigError, match=r"scenario\.gains\.k_p"):
            parse_config(_write(tmp_path, tree))

    def test_wrong_scalar_type(self, tmp_path):
        tree = {"landing": {"n_samples": "lots"}}
        with pytest.raises(ConfigError, match=r"landing\.n_samples"):
            parse_config(_write(tmp_path, tree))

    def test_bool_is_not_an_integer(self, tmp_path):
        tree = {"landing": {"n_samples": True}}
        with pytest.raises(ConfigError, match=r"landing\.n_samples"):
            parse_config(_write(tmp_path, tree))

    def test_schedule_needs_four_lengths(self, tmp_path):
        tree = {"schedule": {"opened": [0.2, 0.2, 0.2]}}
        with pytest.raises(ConfigError, match="4 lengths"):
            parse_config(_write(tmp_path, tree))

    def test_speed_range_ordering(self, tmp_path):
        tree = {"landing": {"speed_range": [-0.5, -2.0]}}
        with pytest.raises(ConfigError, match=r"low.*high"):
            parse_config(_write(tmp_path, tree))

    def test_unsupported_schema_version(self, tmp_path):
        with pytest.raises(ConfigError, match="schema_version"):
            parse_config(_write(tmp_path, {"schema_version": 99}))

    def test_invalid_json_is_wrapped(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid JSON"):
            parse_config(path)

    def test_non_object_root(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1, 2, 3]", encoding="utf-8")
        with pytest.raises(ConfigError, match="JSON object"):
            parse_config(path)

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            parse_config(tmp_path / "absent.json")


class TestSectionValidation:
    def test_grip_rates_positive(self):
        with pytest.raises(ConfigError, match=r"grip\.rate_grasp"):
            Config(grip=GripSearch(rate_grasp=0.0))

    def test_search_bounds_ordered(self):
        with pytest.raises(ConfigError):
            Config(search=LandingSearch(lower=0.3, upper=0.1))

    def test_sampling_seed_non_negative(self):
        with pytest.raises(ConfigError, match=r"landing\.seed"):
            Config(landing=LandingSampling(seed=-1))

    def test_train_seeds_non_empty(self):
        with pytest.raises(ConfigError, match="train_seeds"):
            Config(surrogate=SurrogateTraining(train_seeds=()))

    def test_schedule_lengths_validated(self):
        with pytest.raises(ConfigError, match="4 lengths"):
            Config(schedule=ScheduleConfig(opened=np.array([0.2, 0.2])))
