from __future__ import annotations

import pytest

from backend.config import SETTINGS


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: optimizer accuracy checks (run with -m slow)")


def pytest_collection_modifyitems(config, items):
    if "slow" in (config.getoption("markexpr") or ""):
        return
    skip_slow = pytest.mark.skip(reason="slow; run with -m slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def isolated_output(tmp_path, monkeypatch):
    """Every test writes under its own tmp dir and without progress bars."""
    monkeypatch.setattr(SETTINGS, "base_output_dir", tmp_path / "out")
    monkeypatch.setattr(SETTINGS, "show_progress", False)
    return tmp_path / "out"
