"""CSV and JSON writers with a stable, byte-reproducible layout."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .regen import Trajectory

SCHEMA_VERSION = 1


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats into plain JSON values.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"`` so the
    output stays strict JSON.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(payload: dict) -> str:
    body = dict(payload)
    body.setdefault("schema_version", SCHEMA_VERSION)
    return json.dumps(to_jsonable(body), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload), encoding="utf-8")
    return path


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows), encoding="utf-8")
    return path


def trajectory_csv(traj: Trajectory) -> str:
    """``t,symbol,lookback,is_renewal`` with one row per time index."""
    flags = traj.is_renewal().astype(np.int8)
    cols = np.column_stack((np.arange(traj.n), traj.symbols.astype(np.int64), traj.lookbacks, flags))
    buf = io.StringIO()
    buf.write("t,symbol,lookback,is_renewal\n")
    np.savetxt(buf, cols, fmt="%d", delimiter=",")
    return buf.getvalue()


def write_trajectory(path: str | Path, traj: Trajectory) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(trajectory_csv(traj), encoding="utf-8")
    return path


def read_trajectory(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symbols, lookbacks and renewal indices from a trajectory CSV."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    return data[:, 1].astype(np.int8), data[:, 2], np.flatnonzero(data[:, 3])
