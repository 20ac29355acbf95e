"""File formats: JSON reports, CSV tables and the batch binary format."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .measures import MeasureError

SCHEMA_VERSION = 1


def _clean(obj):
    """Make numpy scalars/arrays JSON-friendly and map +-inf/nan to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps_report(report: dict) -> str:
    body = {"schema_version": SCHEMA_VERSION, **report}
    return json.dumps(_clean(body), sort_keys=True, indent=2) + "\n"


def write_report(path, report: dict) -> None:
    Path(path).write_text(dumps_report(report))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise MeasureError(f"{path}: invalid JSON ({e})") from e


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError("CSV row width does not match header")
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_batch(path, batch) -> None:
    """JSON header line (dim, n, seed, provenance) followed by little-endian float64 values."""
    header = {
        "dim": batch.dim,
        "n": len(batch),
        "seed": batch.seed,
        "provenance": batch.provenance,
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(_clean(header), sort_keys=True) + "\n").encode())
        fh.write(np.ascontiguousarray(batch.values, dtype="<f8").tobytes())


def read_batch(path):
    from .montecarlo import SampleBatch

    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        data = np.frombuffer(fh.read(), dtype="<f8")
    d, n = int(header["dim"]), int(header["n"])
    if data.size != d * n:
        raise MeasureError(f"{path}: expected {d * n} values, found {data.size}")
    return SampleBatch(d, data.reshape(n, d).copy(), header["seed"], header.get("provenance", {}))
