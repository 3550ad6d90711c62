"""
Unit Tests for Configuration Loading
"""

import pytest
import yaml

from config.config import AppConfig, TrainConfig, dump_config, get_settings, load_config
from core.errors import ConfigError


def _write(tmp_path, text: str):
    path = tmp_path / "config.yaml"
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadConfig:
    """Test suite for YAML configuration"""

    def test_empty_file_gives_defaults(self, tmp_path):
        config = load_config(_write(tmp_path, ""))

        assert config.train == TrainConfig()
        assert config.train.loss.lambda1 == pytest.approx(0.5)
        assert config.train.loss.lambda2 == pytest.approx(0.01)
        assert config.critic.backend == "scripted"
        assert config.enhance.scope == "joint"

    def test_override_merges_over_defaults(self, tmp_path):
        config = load_config(_write(tmp_path, "train:\n  iterations: 12\nrender:\n  tile_size: 8\n"))

        assert config.train.iterations == 12
        assert config.render.tile_size == 8
        assert config.render.near == pytest.approx(0.01)

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError, match="Unknown config section"):
            load_config(_write(tmp_path, "viewer:\n  port: 8080\n"))

    def test_unknown_nested_key(self, tmp_path):
        with pytest.raises(ConfigError, match="train"):
            load_config(_write(tmp_path, "train:\n  iteratons: 5\n"))

    @pytest.mark.parametrize(
        "text",
        [
            "train:\n  iterations: -1\n",
            "render:\n  alpha_clamp: 1.5\n",
            "train:\n  loss:\n    lambda1: .nan\n",
            "critic:\n  backend: carrier-pigeon\n",
            "logging:\n  level: LOUD\n",
        ],
    )
    def test_invalid_value(self, tmp_path, text):
        with pytest.raises(ConfigError, match="Invalid configuration"):
            load_config(_write(tmp_path, text))

    def test_missing_explicit_path(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "nope.yaml")

    def test_invalid_yaml(self, tmp_path):
        with pytest.raises(ConfigError, match="Invalid YAML"):
            load_config(_write(tmp_path, "train: [unclosed\n"))

    def test_top_level_must_be_mapping(self, tmp_path):
        with pytest.raises(ConfigError, match="mapping"):
            load_config(_write(tmp_path, "- 1\n- 2\n"))

    def test_log_level_uppercased(self, tmp_path):
        config = load_config(_write(tmp_path, "logging:\n  level: debug\n"))
        assert config.logging.level == "DEBUG"

    def test_assignment_validated(self):
        config = AppConfig()
        with pytest.raises(ValueError):
            config.train.iterations = 0


class TestDumpConfig:
    """Test suite for the canonical config echo"""

    def test_api_key_masked(self, tmp_path):
        config = load_config(_write(tmp_path, "critic:\n  api_key: sk-secret\n"))
        text = dump_config(config)

        assert "sk-secret" not in text
        assert yaml.safe_load(text)["critic"]["api_key"] == "***"

    def test_api_key_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OPENAI_API_KEY", "from-env")
        config = load_config(_write(tmp_path, ""))
        assert config.critic.api_key == "from-env"

    def test_dump_reloads_to_same_config(self, tmp_path):
        config = load_config(_write(tmp_path, "train:\n  seed: 9\n"))
        doc = yaml.safe_load(dump_config(config))
        doc["critic"]["api_key"] = config.critic.api_key

        assert AppConfig(**doc) == config

    def test_hash_stable_and_sensitive(self, tmp_path):
        a = load_config(_write(tmp_path, "train:\n  seed: 1\n"))
        b = load_config(_write(tmp_path, "train:\n  seed: 1\n"))
        c = load_config(_write(tmp_path, "train:\n  seed: 2\n"))

        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()
        assert len(a.config_hash()) == 64

    def test_get_settings_cached(self, tmp_path):
        path = _write(tmp_path, "train:\n  seed: 5\n")
        first = get_settings(path)
        assert get_settings() is first
        assert first.train.seed == 5
