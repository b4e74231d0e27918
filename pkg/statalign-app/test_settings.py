import pytest

import core.config
from core.settings import get_settings


@pytest.fixture
def fresh_settings():
    get_settings.cache_clear()
    yield get_settings
    get_settings.cache_clear()


def test_config_module_has_no_settings_instance():
    assert not hasattr(core.config, "settings")


def test_environment_overrides_reach_get_settings(monkeypatch, fresh_settings):
    monkeypatch.setenv("STATALIGN_ALIGN_NORMAL_EIG_FLOOR", "0.25")
    monkeypatch.setenv("STATALIGN_KERNEL_LENGTHSCALE_SCALE", "0.5")
    settings = fresh_settings()
    assert settings.align.normal_eig_floor == 0.25
    assert settings.kernel.lengthscale_scale == 0.5
    assert fresh_settings() is settings


def test_defaults_without_environment(monkeypatch, fresh_settings):
    monkeypatch.delenv("STATALIGN_ALIGN_NORMAL_EIG_FLOOR", raising=False)
    assert fresh_settings().align.normal_eig_floor == 0.1
