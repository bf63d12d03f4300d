"""Canonical JSON: sorted keys, no insignificant whitespace, UTF-8."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

# read once: os.umask can only be queried by setting it, which races with threads
_UMASK = os.umask(0)
os.umask(_UMASK)


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def dump_bytes(obj: Any) -> bytes:
    return dumps(obj).encode("utf-8")


def write_atomic(path: str | os.PathLike, data: bytes) -> None:
    """Replace ``path`` with ``data`` so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
