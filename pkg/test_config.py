import pytest
from pydantic import ValidationError

from backend.config import PROJECT_ROOT, RunConfig, Settings, load_config_file, resolve_run_config


def test_defaults():
    cfg = RunConfig(command="profile")
    assert cfg.format == "csv"
    assert cfg.dimension == 3
    assert cfg.sources == ["candidate", "lower_bound"]


def test_unknown_keys_are_rejected():
    with pytest.raises(ValidationError):
        RunConfig(command="profile", colour="blue")


@pytest.mark.parametrize("field, value", [
    ("command", "plot"),
    ("format", "xml"),
    ("suite", "everything"),
    ("sources", ""),
    ("sources", "candidate,guess"),
    ("dimension", 0),
    ("points", 1),
])
def test_invalid_values(field, value):
    args = {"command": "profile", field: value}
    with pytest.raises(ValidationError):
        RunConfig(**args)


def test_sources_come_out_in_canonical_order():
    cfg = RunConfig(command="profile", sources="lower_bound, exact")
    assert cfg.sources == ["exact", "lower_bound"]


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# a comment\n\ndimension = 2\ngrid-n=6   # trailing\nsources=exact,candidate\n", encoding="utf-8")
    assert load_config_file(path) == {"dimension": "2", "grid_n": "6", "sources": "exact,candidate"}


def test_config_file_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config_file(tmp_path / "missing.cfg")
    bad = tmp_path / "bad.cfg"
    bad.write_text("dimension 2\n", encoding="utf-8")
    with pytest.raises(ValueError, match="bad.cfg:1"):
        load_config_file(bad)


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("dimension=2\npoints=11\nseed=5\n", encoding="utf-8")
    cfg = resolve_run_config("profile", {"dimension": 1, "points": None}, path)
    assert cfg.dimension == 1
    assert cfg.points == 11
    assert cfg.seed == 5
    assert cfg.command == "profile"


def test_file_cannot_smuggle_unknown_keys(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("volume=0.3\nspeed=fast\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        resolve_run_config("optimize", {}, path)


def test_settings_from_env(monkeypatch):
    monkeypatch.setenv("OUTPUT_DIR", "elsewhere")
    monkeypatch.setenv("LOG_LEVEL", "debug")
    monkeypatch.setenv("SHOW_PROGRESS", "off")
    monkeypatch.setenv("DEFAULT_SEED", "17")
    monkeypatch.setenv("WORKERS", "3")
    s = Settings.from_env()
    assert s.base_output_dir == PROJECT_ROOT / "elsewhere"
    assert s.failures_dir == PROJECT_ROOT / "elsewhere" / "failures"
    assert s.log_level == "DEBUG"
    assert s.show_progress is False
    assert (s.default_seed, s.workers) == (17, 3)


@pytest.mark.parametrize("name, value", [
    ("LOG_LEVEL", "loud"),
    ("WORKERS", "0"),
    ("DEFAULT_SEED", "seven"),
    ("SHOW_PROGRESS", "maybe"),
])
def test_settings_errors(monkeypatch, name, value):
    monkeypatch.setenv(name, value)
    with pytest.raises(RuntimeError, match=name):
        Settings.from_env()
