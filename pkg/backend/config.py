from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Extra, validator

from .compat import get_level_names_mapping


PROJECT_ROOT = Path(__file__).resolve().parents[1]


ENV_PATH = PROJECT_ROOT / ".env"
load_dotenv(dotenv_path=ENV_PATH)

LOG_FORMAT = "[%(module)s.py] %(message)s"

COMMANDS = ("profile", "verify", "figure1", "oracle", "optimize")
SUITES = ("transport", "lemmas", "oracle", "optimizer", "all")
SOURCES = ("exact", "candidate", "lower_bound", "numerical")
FORMATS = ("csv", "json")


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise RuntimeError(
            f"{name} must be an integer, got {raw!r}. "
            f"Expected .env at: {ENV_PATH}"
        )


def _env_flag(name: str, default: bool) -> bool:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise RuntimeError(f"{name} must be a boolean flag, got {raw!r}. Expected .env at: {ENV_PATH}")


@dataclass
class Settings:

    base_output_dir: Path = PROJECT_ROOT / "out"
    log_level: str = "INFO"
    show_progress: bool = True
    default_seed: int = 0
    workers: int = 1

    @classmethod
    def from_env(cls) -> "Settings":
        level = os.getenv("LOG_LEVEL", "INFO").upper()
        if level not in get_level_names_mapping():
            raise RuntimeError(f"Unknown LOG_LEVEL {level!r}. Expected .env at: {ENV_PATH}")

        workers = _env_int("WORKERS", 1)
        if workers < 1:
            raise RuntimeError(f"WORKERS must be >= 1, got {workers}")

        return cls(
            base_output_dir=PROJECT_ROOT / os.getenv("OUTPUT_DIR", "out"),
            log_level=level,
            show_progress=_env_flag("SHOW_PROGRESS", True),
            default_seed=_env_int("DEFAULT_SEED", 0),
            workers=workers,
        )

    @property
    def failures_dir(self) -> Path:
        return self.base_output_dir / "failures"


SETTINGS = Settings.from_env()


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(level=level or SETTINGS.log_level, format=LOG_FORMAT)


def load_config_file(path: Path | str) -> Dict[str, str]:
    """
    Flat ``key=value`` file. Blank lines and lines starting with '#' are
    skipped; a '#' after a value starts a trailing comment.
    """
    path = Path(path).expanduser()
    if not path.exists():
        raise FileNotFoundError(f"Config file does not exist: {path}")

    values: Dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{path}:{lineno}: empty key")
        values[key.replace("-", "_")] = value
    return values


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class RunConfig(BaseModel):
    """Resolved parameters of one command run. Unknown keys are rejected."""

    command: str
    out: Optional[str] = None
    format: str = "csv"
    seed: int = SETTINGS.default_seed

    dimension: int = 3
    points: int = 101
    lambdas: Optional[List[float]] = None
    sources: List[str] = ["candidate", "lower_bound"]

    suite: str = "all"
    fuzz_count: int = 1000

    grid_n: Optional[int] = None
    ks: Optional[List[int]] = None
    symmetry: bool = False
    workers: int = SETTINGS.workers

    volume: float = 0.5
    init: str = "best_candidate"
    max_iterations: Optional[int] = None

    class Config:
        extra = Extra.forbid

    _split_sources = validator("sources", "ks", "lambdas", pre=True, allow_reuse=True)(_split_list)

    @validator("command")
    def _known_command(cls, v: str) -> str:
        if v not in COMMANDS:
            raise ValueError(f"unknown command {v!r}; expected one of {COMMANDS}")
        return v

    @validator("format")
    def _known_format(cls, v: str) -> str:
        if v not in FORMATS:
            raise ValueError(f"format must be csv or json, got {v!r}")
        return v

    @validator("suite")
    def _known_suite(cls, v: str) -> str:
        if v not in SUITES:
            raise ValueError(f"unknown suite {v!r}; expected one of {SUITES}")
        return v

    @validator("sources")
    def _known_sources(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("at least one source is required")
        bad = [s for s in v if s not in SOURCES]
        if bad:
            raise ValueError(f"unknown sources {bad}; expected a subset of {SOURCES}")
        # Canonical column order.
        return [s for s in SOURCES if s in v]

    @validator("dimension", "points", "workers", "fuzz_count")
    def _positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be a positive integer")
        return v

    @validator("points")
    def _at_least_two(cls, v: int) -> int:
        if v < 2:
            raise ValueError("a grid needs at least 2 points")
        return v

    def resolved(self) -> Dict[str, Any]:
        return self.dict()


def resolve_run_config(
    command: str,
    flags: Dict[str, Any],
    config_file: Optional[Path | str] = None,
) -> RunConfig:
    """File values first, then every flag that was actually given."""
    merged: Dict[str, Any] = {}
    if config_file is not None:
        merged.update(load_config_file(config_file))
    merged.update({k: v for k, v in flags.items() if v is not None})
    merged["command"] = command
    return RunConfig.parse_obj(merged)
