import json

import pandas as pd
import pytest
from pydantic import ValidationError

from relaytherm import __version__
from relaytherm.artifacts import OutputWriter, config_hash, read_config_file
from relaytherm.config import Settings, current_settings, get_settings, setting_or, settings_override
from relaytherm.core.errors import ConfigurationError
from relaytherm.run_ledger import RunLedger
from relaytherm.schemas import RunConfig


def test_settings_override_is_scoped():
    assert current_settings().event_tol == 1e-12
    with settings_override(event_tol=1e-10, graze_tol=1e-6) as s:
        assert s.event_tol == 1e-10
        assert setting_or(None, "graze_tol") == 1e-6
        assert setting_or(1e-3, "graze_tol") == 1e-3
        with settings_override(graze_tol=1e-5):
            assert current_settings().event_tol == 1e-10
            assert current_settings().graze_tol == 1e-5
        assert current_settings().graze_tol == 1e-6
    assert current_settings().event_tol == 1e-12


def test_settings_override_validates():
    with pytest.raises(ValueError):
        with settings_override(not_a_setting=1.0):
            pass
    with pytest.raises(ValidationError):
        with settings_override(event_tol=-1.0):
            pass


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("RELAYTHERM_EVENT_TOL", "1e-11")
    monkeypatch.setenv("RELAYTHERM_LOG_LEVEL", "debug")
    get_settings.cache_clear()
    settings = get_settings()
    assert settings.event_tol == 1e-11
    assert settings.log_level == "DEBUG"
    monkeypatch.setenv("RELAYTHERM_GRAZE_TOL", "0")
    with pytest.raises(ValidationError):
        Settings()


def test_config_hash_ignores_key_order():
    a = {"beta": 0.23, "system": {"rod": {"n_modes": 5, "m": {"0": 2.0}}}}
    b = {"system": {"rod": {"m": {"0": 2.0}, "n_modes": 5}}, "beta": 0.23}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({**a, "beta": 0.24})


def test_run_config_validation():
    config = RunConfig.model_validate({"system": {"rod": {"n_modes": 3, "m": {"0": 1.0}}}, "beta": 0.2})
    assert config.gap == pytest.approx(0.2)
    assert config.horizon == 10.0
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"system": {"rod": {"n_modes": 3}}, "beta": 0.2, "unexpected": 1})
    with pytest.raises(ValidationError):
        RunConfig.model_validate(
            {"system": {"rod": {"n_modes": 3}, "lambdas": [0.0, 1.0, 4.0]}, "beta": 0.2}
        )
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"system": {"rod": {"n_modes": 3}}, "beta": 0.2, "tolerances": {"fd_eps": 0.0}})


@pytest.mark.parametrize("key", ["workers", "log_level", "h_grid_points", "output_dir"])
def test_run_config_tolerances_reject_non_tolerance_settings(key):
    base = {"system": {"rod": {"n_modes": 3, "m": {"0": 1.0}}}, "beta": 0.2}
    with pytest.raises(ValidationError, match="not a tolerance setting"):
        RunConfig.model_validate({**base, "tolerances": {key: 2.0}})
    assert RunConfig.model_validate({**base, "tolerances": {"verify_tol": 2.0}}).tolerances == {"verify_tol": 2.0}


def test_output_writer_formats(tmp_path):
    writer = OutputWriter(str(tmp_path / "out"), "abc123", 5)
    frame = pd.DataFrame({"s": [0.1, 1.0 / 3.0], "valid": [1, 0]})
    csv_path = writer.write_csv("rows.csv", frame)
    raw = csv_path.read_bytes()
    assert b"\r\n" not in raw
    assert raw.decode("utf-8").splitlines()[2] == "0.33333333333333331,0"

    json_path = writer.write_json("out.json", {"value": float("inf"), "items": (1, 2)})
    payload = json.loads(json_path.read_text(encoding="utf-8"))
    assert payload["value"] == "inf"
    assert payload["items"] == [1, 2]
    assert payload["config_hash"] == "abc123"
    assert payload["version"] == __version__
    assert payload["n_modes"] == 5
    assert writer.written == ["rows.csv", "out.json"]


def test_read_config_file_formats(tmp_path):
    yaml_path = tmp_path / "run.yaml"
    yaml_path.write_text("beta: 0.23\nsystem:\n  rod:\n    n_modes: 2\n", encoding="utf-8")
    assert read_config_file(str(yaml_path)) == {"beta": 0.23, "system": {"rod": {"n_modes": 2}}}

    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        read_config_file(str(listing))
    with pytest.raises(ConfigurationError):
        read_config_file(str(tmp_path / "missing.json"))


def test_run_ledger_appends(tmp_path):
    ledger = RunLedger(str(tmp_path))
    assert ledger.entries() == []
    ledger.log_run("simulate", "h1", "ok", 0, artifacts=["summary.json"])
    ledger.log_run("periodic", None, "config_error", 2, message="beta: Field required")
    first, second = ledger.entries()
    assert first["command"] == "simulate"
    assert first["artifacts"] == ["summary.json"]
    assert "message" not in first
    assert second["config_hash"] is None
    assert second["message"] == "beta: Field required"
