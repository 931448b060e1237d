"""Settings file in plain key = value form.

Recognized keys: schedule.T, schedule.beta_start, schedule.beta_end,
tbc.sigma, retinex.lambda, vocab. Lookup order for the file itself:
explicit path, then the LUMACTL_CONFIG environment variable, then
./lumactl.toml if present, else built-in defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path

DEFAULT_FILENAME = "lumactl.toml"
ENV_VAR = "LUMACTL_CONFIG"


class ConfigError(Exception):
    """Settings file missing, malformed, or out of range."""


@dataclass(frozen=True)
class Config:
    schedule_t: int = 50
    beta_start: float = 1e-3
    beta_end: float = 0.2
    tbc_sigma: float = 3.0
    retinex_lambda: float = 0.15
    vocab_path: str | None = None


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw, 10)
    except ValueError:
        raise ConfigError(f"{key} needs an integer, got {raw!r}") from None


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key} needs a number, got {raw!r}") from None


def _parse_value(raw: str, lineno: int) -> str:
    if raw.startswith('"'):
        end = raw.find('"', 1)
        if end < 0:
            raise ConfigError(f"line {lineno}: unterminated quote")
        return raw[1:end]
    # inline comments are only recognized outside quotes
    return raw.split("#", 1)[0].strip()


def parse_config(text: str) -> Config:
    cfg = Config()
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        seen.add(key)
        value = _parse_value(raw, lineno)
        if key == "schedule.T":
            t = _parse_int(key, value)
            if t < 1:
                raise ConfigError(f"schedule.T must be at least 1, got {t}")
            cfg = replace(cfg, schedule_t=t)
        elif key == "schedule.beta_start":
            cfg = replace(cfg, beta_start=_parse_float(key, value))
        elif key == "schedule.beta_end":
            cfg = replace(cfg, beta_end=_parse_float(key, value))
        elif key == "tbc.sigma":
            cfg = replace(cfg, tbc_sigma=_parse_float(key, value))
        elif key == "retinex.lambda":
            cfg = replace(cfg, retinex_lambda=_parse_float(key, value))
        elif key == "vocab":
            cfg = replace(cfg, vocab_path=value)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if not 0.0 < cfg.beta_start <= cfg.beta_end < 1.0:
        raise ConfigError(
            f"need 0 < beta_start <= beta_end < 1,"
            f" got {cfg.beta_start} and {cfg.beta_end}"
        )
    if cfg.tbc_sigma < 0.0:
        raise ConfigError(f"tbc.sigma must be non-negative, got {cfg.tbc_sigma}")
    if cfg.retinex_lambda < 0.0:
        raise ConfigError(
            f"retinex.lambda must be non-negative, got {cfg.retinex_lambda}"
        )
    return cfg


def load_config(path: str | Path | None = None) -> Config:
    """Read settings from the resolved location; defaults if none exists."""
    if path is None:
        env_path = os.environ.get(ENV_VAR)
        if env_path:
            path = env_path
        elif Path(DEFAULT_FILENAME).is_file():
            path = DEFAULT_FILENAME
        else:
            return Config()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"settings file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"))
