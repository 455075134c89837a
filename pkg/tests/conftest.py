# tests/conftest.py
import json

import pytest

from relaytherm.config import get_settings
from relaytherm.services.spectral_model import build_rod_model


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    for name in ("RELAYTHERM_WORKERS", "RELAYTHERM_LOG_FORMAT", "RELAYTHERM_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rod2():
    """Rod with m0 = 2, m1 = m2 = 4: grazing on the valid branch near s = 0.265."""
    return build_rod_model(5, {0: 2.0, 1: 4.0, 2: 4.0})


@pytest.fixture
def rod32():
    """Rod with m0 = 3.2, m1 = m2 = 4: Q stays positive, a fold near s = 0.55."""
    return build_rod_model(5, {0: 3.2, 1: 4.0, 2: 4.0})


@pytest.fixture
def single_mode():
    return build_rod_model(1, {0: 1.0})


@pytest.fixture
def one_sensor():
    """Modes 2..4 unsensed (guided)."""
    return build_rod_model(5, {0: 2.0, 1: 4.0})


@pytest.fixture
def write_config(tmp_path):
    def _write(payload, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return str(path)

    return _write
