"""
Tests for the YAML configuration loader.
"""
import pytest
import yaml

from secest.core.config import ConfigurationError, SecestConfig

ENV_VARS = ("SECEST_SEED", "SECEST_THREADS", "SECEST_TRIALS", "SECEST_LOG_LEVEL", "SECEST_OUTPUT_DIR")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for var in ENV_VARS:
        monkeypatch.delenv(var, raising=False)


def _write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_bundled_config_matches_defaults():
    """
    Test loading without an explicit path.

    This test verifies that:
    - every default section is present
    - the bundled YAML agrees with the built-in defaults on key values
    """
    config = SecestConfig.load_config()
    defaults = SecestConfig.defaults()

    assert set(defaults) <= set(config)
    assert config["montecarlo"]["n"] == defaults["montecarlo"]["n"] == 8
    assert config["uav"]["window"] == defaults["uav"]["window"] == 20
    assert config["decoder"]["method"] == "qr"


def test_partial_yaml_is_merged_over_defaults(tmp_path):
    """Test that a file setting one nested key keeps the rest of the section."""
    config = SecestConfig.load_config(_write(tmp_path, {"solver": {"pivot_rule": "bland"}}))

    assert config["solver"]["pivot_rule"] == "bland"
    assert config["solver"]["feas_tol"] == pytest.approx(1e-8)
    assert config["montecarlo"]["p"] == 10


def test_environment_overrides(tmp_path, monkeypatch):
    """Test the SECEST_* environment overrides."""
    monkeypatch.setenv("SECEST_SEED", "42")
    monkeypatch.setenv("SECEST_TRIALS", "7")
    monkeypatch.setenv("SECEST_OUTPUT_DIR", str(tmp_path))

    config = SecestConfig.load_config()

    assert config["execution"]["seed"] == 42
    assert config["montecarlo"]["trials_per_point"] == 7
    assert config["reporting"]["output_dir"] == str(tmp_path)


def test_invalid_environment_integer(monkeypatch):
    """Test that a non-integer seed in the environment raises ConfigurationError."""
    monkeypatch.setenv("SECEST_SEED", "seven")

    with pytest.raises(ConfigurationError):
        SecestConfig.load_config()


@pytest.mark.parametrize("data", [
    {"solver": {"feas_tol": -1.0}},
    {"solver": {"pivot_rule": "steepest"}},
    {"decoder": {"method": "lasso"}},
    {"execution": {"threads": 0}},
    {"uav": {"n_y": 4}},
    {"montecarlo": "many"},
])
def test_invalid_values_are_rejected(tmp_path, data):
    """Test range and type validation of the merged configuration."""
    with pytest.raises(ConfigurationError):
        SecestConfig.load_config(_write(tmp_path, data))


def test_missing_and_malformed_files(tmp_path):
    """Test a missing path and a file whose top level is not a mapping."""
    with pytest.raises(ConfigurationError):
        SecestConfig.load_config(str(tmp_path / "absent.yaml"))

    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigurationError):
        SecestConfig.load_config(str(path))


def test_dot_notation_get(tmp_path):
    """Test nested lookups, defaults for missing keys and explicit dictionaries."""
    SecestConfig.load_config(_write(tmp_path, {"kalman": {"p0_scale": 3.0}}))

    assert SecestConfig.get("kalman.p0_scale") == 3.0
    assert SecestConfig.get("kalman.missing", "fallback") == "fallback"
    assert SecestConfig.get("a.b", config={"a": {"b": 1}}) == 1
