"""Atomic text/JSON file helpers used by every writer in the package."""

from __future__ import annotations

import json
import os
import tempfile


def atomic_write_text(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file in the same directory + rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(path: str, obj) -> None:
    """Serialize ``obj`` deterministically (sorted keys, fixed separators)."""
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def load_json(path: str):
    with open(path) as handle:
        return json.load(handle)
