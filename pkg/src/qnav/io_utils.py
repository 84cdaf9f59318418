"""CSV and metadata helpers shared by the trainers and the harness.

Every emitted file starts with '#' comment lines carrying a schema tag, the
resolved config JSON and the current git description, so results stay
self-describing and reruns can be compared byte for byte.
"""

from __future__ import annotations

import json
import os
import subprocess

import numpy as np

from .errors import InputError

SCHEMA_VERSION = 1


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.TimeoutExpired):
        pass
    return "unknown"


def fmt_float(v: float) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


def write_csv(path: str, columns: list[str], rows: list[list], meta: dict | None = None) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    lines = [f"# schema=qnav-csv v{SCHEMA_VERSION}"]
    if meta:
        lines.append("# config=" + json.dumps(meta, sort_keys=True))
    lines.append("# git=" + git_describe())
    lines.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise InputError(f"row width {len(row)} != header width {len(columns)}")
        lines.append(",".join(fmt_float(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path: str) -> tuple[list[str], np.ndarray, list[str]]:
    """Return (column names, float matrix, raw comment lines)."""
    comments: list[str] = []
    header: list[str] | None = None
    data: list[list[float]] = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                comments.append(line)
                continue
            if header is None:
                header = line.split(",")
                continue
            data.append([float(tok) for tok in line.split(",")])
    if header is None:
        raise InputError(f"{path} has no header row")
    matrix = np.asarray(data, dtype=np.float64) if data else np.empty((0, len(header)))
    return header, matrix, comments
