"""Service configuration: JSON file, overridable by CLI flags.

The ATELIER_CONFIG environment variable names the default config path when
no --config flag is given. Every field has a documented default; only a
backend of "a1111" has a mandatory companion (its base URL).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields

from .control import CannySettings

ENV_CONFIG = "ATELIER_CONFIG"

BACKENDS = ("mock", "a1111")


class BadConfig(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    host: str = "127.0.0.1"
    port: int = 8777
    store_root: str = "atelier-store"
    backend: str = "mock"
    a1111_url: str | None = None
    a1111_timeout_s: float = 120.0
    poll_interval_ms: int = 500
    workers: int = 1
    canny: CannySettings = field(default_factory=CannySettings)
    cors_origins: tuple[str, ...] = ()

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise BadConfig(f"backend must be one of {BACKENDS}")
        if self.backend == "a1111" and not self.a1111_url:
            raise BadConfig("backend a1111 requires a1111_url")
        if not (1 <= self.port <= 65535):
            raise BadConfig("port out of range")
        if self.workers < 1:
            raise BadConfig("workers must be at least 1")
        if self.poll_interval_ms < 1:
            raise BadConfig("poll_interval_ms must be positive")


_CONFIG_KEYS = {f.name for f in fields(Config)}


def load_config(path: str | None = None, overrides: dict | None = None) -> Config:
    """Read a JSON config file and apply overrides on top.

    path None falls back to $ATELIER_CONFIG; if neither names a file the
    built-in defaults apply. Unknown keys are rejected rather than ignored,
    so typos fail loudly.
    """
    raw: dict = {}
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None
    if path is not None:
        try:
            with open(path, "rb") as f:
                raw = json.load(f)
        except OSError as e:
            raise BadConfig(f"cannot read config {path}: {e}") from None
        except ValueError as e:
            raise BadConfig(f"config {path} is not valid JSON: {e}") from None
        if not isinstance(raw, dict):
            raise BadConfig("config root must be a JSON object")

    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v

    unknown = sorted(set(raw) - _CONFIG_KEYS)
    if unknown:
        raise BadConfig(f"unknown config keys: {', '.join(unknown)}")

    if "canny" in raw:
        c = raw["canny"]
        if not isinstance(c, dict):
            raise BadConfig("canny must be an object")
        try:
            raw["canny"] = CannySettings(**c)
        except (TypeError, ValueError) as e:
            raise BadConfig(f"bad canny settings: {e}") from None
    if "cors_origins" in raw:
        if not isinstance(raw["cors_origins"], (list, tuple)):
            raise BadConfig("cors_origins must be a list")
        raw["cors_origins"] = tuple(raw["cors_origins"])

    try:
        return Config(**raw)
    except TypeError as e:
        raise BadConfig(str(e)) from None


def make_backend(cfg: Config):
    """Instantiate the configured diffusion backend."""
    if cfg.backend == "mock":
        from .backends.mock import MockBackend

        return MockBackend()
    from .backends.a1111 import A1111Backend

    return A1111Backend(
        cfg.a1111_url,
        timeout=cfg.a1111_timeout_s,
        poll_interval=cfg.poll_interval_ms / 1000.0,
    )
