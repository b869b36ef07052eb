import dataclasses
import json

import pytest

from surfrad.config import (
    ConfigError,
    RunConfig,
    config_hash,
    load_run_config,
    run_config_from_dict,
    run_config_to_dict,
    save_run_config,
)
from surfrad.fields import ModelConfig
from surfrad.losses import LossConfig


class TestRoundTrip:
    def test_defaults_survive_dict_round_trip(self):
        cfg = RunConfig()
        assert run_config_from_dict(run_config_to_dict(cfg)) == cfg

    def test_custom_values_survive_json_round_trip(self, tmp_path):
        cfg = RunConfig(
            seed=7,
            model=ModelConfig(fusion_dim=64, image_widths=(4, 8, 12)),
            loss=LossConfig(n_rays=17, lr_pretrain=3e-4),
            data_dir="data/sphere",
            out_dir="runs/a",
        )
        path = tmp_path / "run.json"
        save_run_config(cfg, path)
        assert load_run_config(path) == cfg

    def test_image_widths_list_becomes_tuple(self):
        doc = run_config_to_dict(RunConfig())
        doc["model"]["image_widths"] = [2, 3, 4]
        cfg = run_config_from_dict(doc)
        assert cfg.model.image_widths == (2, 3, 4)

    def test_sections_are_optional(self):
        cfg = run_config_from_dict({"schema_version": 1})
        assert cfg == RunConfig()


class TestValidation:
    def test_unknown_top_level_key(self):
        doc = run_config_to_dict(RunConfig())
        doc["modle"] = {}
        with pytest.raises(ConfigError, match="modle"):
            run_config_from_dict(doc)

    @pytest.mark.parametrize("section,key", [
        ("model", "fusion_dims"), ("loss", "lr_pretain"), ("render", "n_corase"),
    ])
    def test_unknown_nested_key(self, section, key):
        doc = run_config_to_dict(RunConfig())
        doc[section][key] = 1
        with pytest.raises(ConfigError, match=key):
            run_config_from_dict(doc)

    def test_schema_version_required_and_checked(self):
        with pytest.raises(ConfigError, match="schema"):
            run_config_from_dict({})
        with pytest.raises(ConfigError, match="schema"):
            run_config_from_dict({"schema_version": 99})

    def test_section_must_be_object(self):
        with pytest.raises(ConfigError, match="'loss'"):
            run_config_from_dict({"schema_version": 1, "loss": 5})

    def test_invalid_section_value_is_config_error(self):
        doc = run_config_to_dict(RunConfig())
        doc["loss"]["n_rays"] = 0
        with pytest.raises(ConfigError, match="loss"):
            run_config_from_dict(doc)

    @pytest.mark.parametrize("seed", [-1, True, "zero", 1.5])
    def test_bad_seed(self, seed):
        with pytest.raises(ConfigError):
            run_config_from_dict({"schema_version": 1, "seed": seed})

    def test_bad_path_type(self):
        with pytest.raises(ConfigError, match="data_dir"):
            run_config_from_dict({"schema_version": 1, "data_dir": 5})

    def test_invalid_json_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError, match="JSON"):
            load_run_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_run_config(tmp_path / "absent.json")


class TestHash:
    def test_stable_for_equal_configs(self):
        assert config_hash(RunConfig()) == config_hash(RunConfig())

    def test_ignores_paths(self):
        a = RunConfig(data_dir="x", out_dir="y")
        assert config_hash(a) == config_hash(RunConfig())

    def test_sensitive_to_hyperparameters(self):
        base = RunConfig()
        assert config_hash(base) != config_hash(dataclasses.replace(base, seed=1))
        changed = dataclasses.replace(base, loss=LossConfig(n_rays=13))
        assert config_hash(base) != config_hash(changed)

    def test_survives_file_round_trip(self, tmp_path):
        cfg = RunConfig(seed=3, model=ModelConfig(embed_dim=128))
        path = tmp_path / "cfg.json"
        save_run_config(cfg, path)
        assert config_hash(load_run_config(path)) == config_hash(cfg)

    def test_file_is_plain_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        save_run_config(RunConfig(), path)
        doc = json.loads(path.read_text())
        assert doc["schema_version"] == 1
        assert set(doc) == {"schema_version", "seed", "model", "loss", "render",
                            "data_dir", "out_dir"}
