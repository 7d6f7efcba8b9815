import pytest

from pymassing.configuration import dump_config, get_config, load_config, set_config
from pymassing.defaults import RunConfig, desk, full, preset
from pymassing.errors import ConfigError


@pytest.fixture(autouse=True)
def restore():
    before = get_config()
    yield
    set_config(before)


def test_defaults_without_file():
    config = load_config()
    assert config == desk()
    assert get_config() is config


def test_file_overrides_only_its_keys(tmp_path):
    path = tmp_path / "config.json"
    path.write_text('{"seed": 3, "model": {"layers": 2}}')
    config = load_config(path)
    assert config.seed == 3
    assert config.model.layers == 2
    assert config.model.heads == desk().model.heads


def test_arguments_override_the_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text('{"seed": 3, "scale": "desk"}')
    config = load_config(path, scale="paper", seed=11)
    assert config.seed == 11
    assert config.scale == "paper"
    assert config.model.model_dim == full().model.model_dim


def test_round_trip(tmp_path):
    path = tmp_path / "config.json"
    path.write_bytes(dump_config(full()))
    assert load_config(path) == full()


@pytest.mark.parametrize("content", ['{"schema_version": 2}', "[1, 2]", '{"model": {"layers": "four"}}', '{"scale": "galaxy"}'])
def test_invalid_files(tmp_path, content):
    path = tmp_path / "config.json"
    path.write_text(content)
    with pytest.raises(ConfigError):
        load_config(path)


def test_presets():
    assert preset("desk") == RunConfig()
    assert preset("paper") == full()
    assert preset("full") == preset("paper")
    with pytest.raises(ValueError):
        preset("galaxy")


def test_full_is_an_alias_of_paper():
    config = load_config(scale="full")
    assert config.scale == "paper"
    assert config.model.model_dim == 2048
