"""Plain-text ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored. Keys are case-sensitive and may
carry dotted prefixes (``source.0``, ``gss.iterations``); values are kept as
strings and converted by the consumer.
"""
from pathlib import Path
from typing import Dict, Optional, Sequence

from .errors import ConfigError


def parse_kv(text: str, origin: str = "<config>") -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{origin}:{lineno}: empty key")
        out[key] = value
    return out


def load_kv(path) -> Dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_kv(text, str(path))


def section(cfg: Dict[str, str], prefix: str) -> Dict[str, str]:
    """Sub-dict of keys under ``prefix.`` with the prefix stripped."""
    p = prefix + "."
    return {k[len(p) :]: v for k, v in cfg.items() if k.startswith(p)}


def get_float(cfg, key, default=None) -> Optional[float]:
    if key not in cfg:
        return default
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {cfg[key]!r}") from None


def get_int(cfg, key, default=None) -> Optional[int]:
    if key not in cfg:
        return default
    try:
        return int(cfg[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {cfg[key]!r}") from None


def get_bool(cfg, key, default=None) -> Optional[bool]:
    if key not in cfg:
        return default
    v = cfg[key].lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {cfg[key]!r}")


def get_floats(cfg, key, default: Optional[Sequence[float]] = None):
    if key not in cfg:
        return default
    try:
        return tuple(float(v) for v in cfg[key].replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{key}: expected a list of numbers, got {cfg[key]!r}") from None
