"""Atomic file writing, experiment configs, and run metadata."""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import ConfigError


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt17(x: float) -> str:
    return f"{float(x):.17g}"


def validate_keys(doc: dict, allowed: set[str], context: str) -> None:
    """Fail fast on unknown configuration keys."""
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {sorted(unknown)}; "
                          f"allowed: {sorted(allowed)}")


def load_config(path: str) -> dict:
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"bad config {path}: {e}") from e


def write_metadata(path: str, command: str, config: dict, overrides: dict) -> None:
    import matplotlib

    from . import __version__
    doc = {
        "command": command,
        "config": config,
        "overrides": overrides,
        "versions": {
            "pilotsched": __version__,
            "numpy": np.__version__,
            "matplotlib": matplotlib.__version__,
        },
    }
    atomic_write_text(path, json.dumps(doc, indent=2, default=str) + "\n")
