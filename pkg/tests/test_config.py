import numpy as np
import pytest

from nccerf import ConfigError, ModelConfig
from nccerf.config import (build_config, config_items, dump_config,
                           load_config, parse_value)


def test_defaults_round_trip(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text(dump_config(ModelConfig()))
    assert load_config(p) == ModelConfig()


def test_file_values_and_overrides(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[model]\nK = 7\niterations = 300\nburn_in = 100\n"
                 "V0_y = 10\nlevels = 0.5, 0.9\nstandardize = no\n"
                 "grid_points = 20\nm0_w = 1, 2, 3\n")
    cfg = load_config(p, {"K": 9, "seed": None})
    assert cfg.K == 9 and cfg.iterations == 300 and cfg.seed == 0
    assert cfg.priors.V0_y == 10.0 and cfg.levels == (0.5, 0.9)
    assert cfg.standardize is False and cfg.grid.points == 20
    assert cfg.priors.m0_w == (1.0, 2.0, 3.0)


def test_matrix_prior():
    cfg = build_config({"V0_y": parse_value("V0_y", "2, 0.5; 0.5, 1")})
    np.testing.assert_array_equal(cfg.priors.V0_y, ((2, 0.5), (0.5, 1)))
    again = build_config({"V0_y": parse_value(
        "V0_y", config_items(cfg)["V0_y"])})
    assert again.priors.V0_y == cfg.priors.V0_y


@pytest.mark.parametrize("text", ["[model]\nbogus = 1\n", "[other]\nK = 1\n",
                                  "[model]\nK = many\n",
                                  "[model]\nstandardize = maybe\n",
                                  "[model]\nK = 0\n"])
def test_bad_files(tmp_path, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")
