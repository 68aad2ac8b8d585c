"""Configuration loading.

Config files use INI sections whose section and option names join into
dotted keys: ``[embed] dimension = 256`` is read as ``embed.dimension``.
Every key has a default, so an empty config is a valid config. The
``METAPIX_CONFIG`` environment variable points at the file used by the
server process.
"""

from __future__ import annotations

import configparser
import os
from pathlib import Path
from typing import Any

from metapix.errors import MetapixError

DEFAULTS: dict[str, Any] = {
    "server.port": 8047,
    "server.host": "127.0.0.1",
    "store.root": "./metapix-data",
    "auth.tokens_file": "",
    "crawl.interval_seconds": 30,
    "embed.dimension": 256,
    "embed.model_id": "stub-fnv1a",
    "video.window_seconds": 5.0,
    "video.stride_seconds": 5.0,
    "ann.tables": 16,
    "ann.bits": 12,
    "ann.seed": 20240901,
    "ann.probe_radius": 3,
    "bus.max_attempts": 5,
    "bus.ttl_seconds": 3600.0,
    "jobs.workers": 4,
}


class Config:
    """Dotted-key configuration with typed accessors and defaults."""

    def __init__(self, values: dict[str, Any] | None = None):
        self._values = dict(values or {})

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Config":
        """Load from an INI file; a missing path means all defaults.

        When *path* is None the ``METAPIX_CONFIG`` env var is consulted.
        """
        if path is None:
            path = os.environ.get("METAPIX_CONFIG") or None
        values: dict[str, Any] = {}
        if path is not None:
            parser = configparser.ConfigParser()
            read = parser.read(str(path))
            if not read:
                raise MetapixError("STORAGE_IO", f"config file not readable: {path}")
            for section in parser.sections():
                for option, raw in parser.items(section):
                    values[f"{section}.{option}"] = raw
        return cls(values)

    def get(self, key: str) -> Any:
        if key in self._values:
            return self._values[key]
        if key in DEFAULTS:
            return DEFAULTS[key]
        raise KeyError(key)

    def get_str(self, key: str) -> str:
        return str(self.get(key))

    def get_int(self, key: str) -> int:
        return int(self.get(key))

    def get_float(self, key: str) -> float:
        return float(self.get(key))

    def with_overrides(self, **overrides: Any) -> "Config":
        """Copy with dotted keys overridden (double underscore stands for the dot)."""
        values = dict(self._values)
        for key, value in overrides.items():
            values[key.replace("__", ".")] = value
        return Config(values)
