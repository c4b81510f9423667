"""Disk formats: binary field dumps, CSV tables, JSON reports.

Field dumps are little-endian float64 in x-fastest order
(file index = (iz*ny + iy)*nx + ix) with a JSON sidecar describing dims,
spacing, origin and layout. CSV numbers use 17 significant digits and JSON is
written with sorted keys, so identical configs and seeds reproduce outputs
byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

FLOAT_FMT = "%.17g"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, float) and (np.isnan(x) or np.isinf(x)):
        return None
    return x


def write_json(path: Union[str, Path], obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_csv(path: Union[str, Path], header: Sequence[str], rows: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def write_field(path: Union[str, Path], values: np.ndarray,
                origin: Sequence[float], spacing: float) -> None:
    """3-D (or plane, promoted to nz=1) field in the binary dump format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(values, dtype="<f8")
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError("field dumps are 3-D (or 2-D planes)")
    nx, ny, nz = arr.shape
    # file order: ix fastest, then iy, then iz
    arr.transpose(2, 1, 0).tofile(path)
    sidecar = {
        "dims": [nx, ny, nz],
        "spacing": float(spacing),
        "origin": [float(v) for v in origin],
        "layout": "x-fastest",
        "dtype": "<f8",
    }
    write_json(path.with_suffix(path.suffix + ".json"), sidecar)


def read_field(path: Union[str, Path]) -> tuple[np.ndarray, dict]:
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json")) as fh:
        meta = json.load(fh)
    nx, ny, nz = meta["dims"]
    flat = np.fromfile(path, dtype="<f8")
    arr = flat.reshape(nz, ny, nx).transpose(2, 1, 0)
    return np.ascontiguousarray(arr), meta


def resolve_out_dir(configured: Optional[str], cli_override: Optional[str]) -> Path:
    """Priority: CLI flag, then EXWAVE_OUTDIR, then the config, then ./out."""
    if cli_override:
        return Path(cli_override)
    env = os.environ.get("EXWAVE_OUTDIR")
    if env:
        return Path(env)
    return Path(configured or "out")


def write_report_bundle(report: dict, out_dir: Union[str, Path],
                        origin=(0.0, 0.0), spacing: float = 1.0) -> Path:
    """report.json plus any attached tables and plane dumps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables = report.pop("tables", {})
    dumps = report.pop("field_dumps", {})
    for fname, (header, rows) in tables.items():
        write_csv(out / fname, header, rows)
    for name, arr in dumps.items():
        write_field(out / f"{name}.f64", arr,
                    origin=tuple(origin) + (0.0,), spacing=spacing)
    write_json(out / "report.json", report)
    return out
