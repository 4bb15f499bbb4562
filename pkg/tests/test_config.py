"""Configuration parsing tests: defaults, validation, round trips."""

import json

import pytest

from repsim import ExperimentConfig, config_from_dict, config_from_json, load_config
from repsim.errors import ConfigError


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.method == "full"
    assert cfg.hcs_lambda == 0.8
    assert cfg.lr == 6e-4
    assert cfg.batch_size == 128
    assert cfg.epochs == 50
    assert cfg.seeds == (0,)
    assert cfg.rho == 0.01
    assert cfg.loss == "ce"
    assert cfg.task.d_in == 16


def test_empty_dict_gives_defaults():
    assert config_from_dict({}) == ExperimentConfig()


def test_unknown_top_key_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        config_from_dict({"methd": "full"})


def test_unknown_task_key_rejected():
    with pytest.raises(ConfigError, match="unknown task keys"):
        config_from_dict({"task": {"bogus": 1}})


def test_lambda_key_maps_to_hcs_lambda():
    cfg = config_from_dict({"method": "hcs", "lambda": 0.3})
    assert cfg.hcs_lambda == 0.3
    assert cfg.to_dict()["lambda"] == 0.3


def test_lambda_range_enforced():
    with pytest.raises(ConfigError):
        config_from_dict({"lambda": 1.5})
    with pytest.raises(ConfigError):
        config_from_dict({"lambda": -0.1})


def test_derived_config_validation_runs_at_construction():
    with pytest.raises(ConfigError):
        ExperimentConfig(method="nope")
    with pytest.raises(ConfigError):
        ExperimentConfig(lr=0.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(rho=-1.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(seeds=())
    with pytest.raises(ConfigError):
        ExperimentConfig(seeds=("a",))
    with pytest.raises(ConfigError):
        ExperimentConfig(loss="hinge")


def test_json_round_trip_is_fixed_point():
    cfg = config_from_dict(
        {
            "task": {"n1": 512, "eval_rot_tau": 0.2, "label_noise": 0.1},
            "method": "repsim",
            "seeds": [0, 1, 2],
            "epochs": 5,
        }
    )
    text = cfg.to_json()
    again = config_from_json(text)
    assert again == cfg
    assert again.to_json() == text


def test_seeds_must_be_list():
    with pytest.raises(ConfigError, match="seeds"):
        config_from_dict({"seeds": 3})


def test_invalid_json_text():
    with pytest.raises(ConfigError, match="JSON"):
        config_from_json("{not json")
    with pytest.raises(ConfigError, match="object"):
        config_from_json("[1, 2]")


def test_load_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"method": "hcs", "lambda": 0.5}))
    cfg = load_config(str(path))
    assert cfg.method == "hcs"
    assert cfg.hcs_lambda == 0.5


def test_with_updates():
    cfg = ExperimentConfig()
    changed = cfg.with_updates(method="repsim", epochs=7)
    assert changed.method == "repsim"
    assert changed.epochs == 7
    assert changed.lr == cfg.lr
    assert cfg.method == "full"


def test_helper_configs_carry_values():
    cfg = ExperimentConfig(method="hcs", hcs_lambda=0.25, lr=0.01, batch_size=32, epochs=3)
    lc = cfg.loss_config()
    assert lc.method == "hcs"
    assert lc.hcs_lambda == 0.25
    sc = cfg.sgd_config()
    assert (sc.lr, sc.batch_size, sc.epochs) == (0.01, 32, 3)
