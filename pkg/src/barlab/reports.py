"""Deterministic run outputs.

report.json is a pure function of (config, seed): keys sorted, fixed
separators, shortest-repr floats, no timestamps, no worker counts. Anything
environmental (wall clock, package version, file list) goes to manifest.json
instead. All writes are atomic (temp file + rename).
"""

from __future__ import annotations

import dataclasses
import datetime
import enum
import json
import os
import tempfile
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = [
    "sanitize",
    "json_bytes",
    "write_json",
    "write_csv",
    "write_manifest",
    "read_report",
]


def sanitize(obj: Any) -> Any:
    """Reduce dataclasses, enums and numpy scalars to plain JSON types."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        if obj != obj or obj in (float("inf"), float("-inf")):
            raise ValueError("reports must not contain NaN or infinities")
        return obj
    if isinstance(obj, enum.Enum):
        return sanitize(obj.value)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return sanitize(float(obj))
    if isinstance(obj, np.ndarray):
        return [sanitize(x) for x in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: sanitize(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            if not isinstance(k, str):
                raise ValueError(f"report keys must be strings, got {k!r}")
            out[k] = sanitize(v)
        return out
    if isinstance(obj, (list, tuple)):
        return [sanitize(x) for x in obj]
    raise ValueError(f"cannot serialize {type(obj).__name__} into a report")


def json_bytes(obj: Any) -> bytes:
    text = json.dumps(sanitize(obj), sort_keys=True, separators=(",", ":"),
                      allow_nan=False)
    return (text + "\n").encode("utf-8")


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, obj: Any) -> None:
    _atomic_write(path, json_bytes(obj))


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Comma-delimited text with a header line; floats use shortest repr."""
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError("row width does not match the header")
        lines.append(",".join(_cell(v) for v in row))
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def write_manifest(out_dir: str, command: str, seed: int,
                   outputs: Sequence[str], extra: dict | None = None) -> str:
    """Environmental record of one run; the only file carrying a timestamp."""
    from . import __version__
    manifest = {
        "command": command,
        "seed": seed,
        "version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc)
                       .isoformat(timespec="seconds"),
        "outputs": sorted(outputs),
    }
    if extra:
        manifest.update(sanitize(extra))
    path = os.path.join(out_dir, "manifest.json")
    _atomic_write(path, (json.dumps(manifest, sort_keys=True, indent=2) + "\n")
                  .encode("utf-8"))
    return path


def read_report(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        report = json.load(fh)
    if not isinstance(report, dict) or "kind" not in report:
        raise ValueError(f"{path} is not a run report (missing 'kind')")
    return report
