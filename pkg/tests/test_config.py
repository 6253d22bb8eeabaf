"""Run configuration: key table, parsing, and canonical serialization."""

import numpy as np
import pytest

from occfit.config import (KEYS, MetricConfig, RunConfig, canonical,
                           load_config, parse_config, parse_items)
from occfit.errors import ConfigError, ParseError


class TestRunConfigDefaults:
    def test_defaults_construct(self):
        cfg = RunConfig()
        assert cfg.network.num_hidden_layers == 8
        assert cfg.network.hidden_width == 256
        assert cfg.trainer.n_iterations == 40_000
        assert cfg.grid_resolution == 128
        assert cfg.metrics.samples == 100_000
        assert cfg.metrics.tau == 0.01

    def test_grid_resolution_validated(self):
        with pytest.raises(ConfigError):
            RunConfig(grid_resolution=4)

    def test_metric_config_validated(self):
        with pytest.raises(ConfigError):
            MetricConfig(samples=0)
        with pytest.raises(ConfigError):
            MetricConfig(tau=0.0)


class TestKeyTable:
    def test_every_knob_has_a_key(self):
        assert len(KEYS) == 33

    def test_output_dim_is_not_configurable(self):
        assert "network.output_dim" not in KEYS

    def test_sections_covered(self):
        sections = {k.split(".", 1)[0] for k in KEYS}
        assert sections == {"network", "init", "schedule", "trainer",
                            "grid", "metrics"}


class TestParseItems:
    def test_int_override(self):
        cfg = parse_items([("trainer.n_iterations", "100")])
        assert cfg.trainer.n_iterations == 100

    def test_float_override(self):
        cfg = parse_items([("trainer.learning_rate", "2.5e-4")])
        assert cfg.trainer.learning_rate == 2.5e-4

    @pytest.mark.parametrize("raw,want", [
        ("true", True), ("1", True), ("yes", True), ("on", True),
        ("false", False), ("0", False), ("no", False), ("off", False),
        ("TRUE", True), ("False", False),
    ])
    def test_bool_override(self, raw, want):
        cfg = parse_items([("trainer.freeze_newton_direction", raw)])
        assert cfg.trainer.freeze_newton_direction is want

    def test_skip_layer_none(self):
        cfg = parse_items([("network.skip_layer_index", "none"),
                           ("network.num_hidden_layers", "2")])
        assert cfg.network.skip_layer_index is None

    def test_adam_keys_reach_nested_config(self):
        cfg = parse_items([("trainer.adam_beta1", "0.8"),
                           ("trainer.adam_eps", "1e-9")])
        assert cfg.trainer.adam.beta1 == 0.8
        assert cfg.trainer.adam.eps == 1e-9
        assert cfg.trainer.adam.beta2 == 0.999

    def test_grid_key_is_top_level(self):
        cfg = parse_items([("grid.resolution", "64")])
        assert cfg.grid_resolution == 64

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="trainer.momentum"):
            parse_items([("trainer.momentum", "0.9")])

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="bad value"):
            parse_items([("trainer.n_iterations", "many")])
        with pytest.raises(ConfigError, match="bad value"):
            parse_items([("trainer.freeze_newton_direction", "maybe")])

    def test_validation_still_applies(self):
        with pytest.raises(ConfigError):
            parse_items([("trainer.learning_rate", "-1.0")])
        with pytest.raises(ConfigError):
            parse_items([("network.hidden_width", "2")])

    def test_base_layering(self):
        base = parse_items([("trainer.seed", "7")])
        cfg = parse_items([("trainer.learning_rate", "5e-4")], base=base)
        assert cfg.trainer.seed == 7
        assert cfg.trainer.learning_rate == 5e-4


class TestParseConfigText:
    def test_comments_and_blanks(self):
        cfg = parse_config("# a comment\n\n"
                           "trainer.seed = 9  # trailing comment\n"
                           "  grid.resolution=32  \n")
        assert cfg.trainer.seed == 9
        assert cfg.grid_resolution == 32

    def test_missing_equals_reports_line(self):
        with pytest.raises(ParseError) as exc:
            parse_config("trainer.seed=1\nnot a pair\n")
        assert exc.value.line == 2

    def test_path_in_error(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("oops\n")
        with pytest.raises(ParseError, match="run.cfg"):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError, match="cannot read config"):
            load_config(tmp_path / "absent.cfg")


class TestCanonical:
    def test_lists_every_key_sorted_once(self):
        lines = canonical(RunConfig()).splitlines()
        assert len(lines) == len(KEYS)
        keys = [ln.split("=", 1)[0] for ln in lines]
        assert keys == sorted(KEYS)

    def test_default_round_trip(self):
        cfg = RunConfig()
        assert parse_config(canonical(cfg)) == cfg

    def test_modified_round_trip(self):
        cfg = parse_items([
            ("trainer.learning_rate", repr(1.0 / 3.0)),
            ("trainer.eps_grad", "1e-10"),
            ("trainer.freeze_newton_direction", "true"),
            ("trainer.compute_dtype", "float64"),
            ("network.skip_layer_index", "none"),
            ("network.num_hidden_layers", "3"),
            ("network.activation", "relu"),
            ("schedule.kappa", repr(np.pi / 200.0)),
            ("metrics.with_normals", "false"),
            ("grid.resolution", "96"),
        ])
        again = parse_config(canonical(cfg))
        assert again == cfg
        assert canonical(again) == canonical(cfg)

    def test_round_trip_preserves_float_precision(self):
        cfg = parse_items([("init.sphere_radius",
                            repr(float(np.sqrt(2.0) / 3)))])
        again = parse_config(canonical(cfg))
        assert again.init.sphere_radius == cfg.init.sphere_radius
