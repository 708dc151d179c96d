"""Atomic, deterministic file output: JSON, CSV, grids and the manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def to_jsonable(x):
    """Convert numpy containers and scalars into plain JSON types."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        f = float(x)
        if np.isnan(f):
            return None
        if np.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return x


def dumps_json(obj) -> str:
    # json renders floats with repr, which round-trips exactly
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def dumps_csv(header: Sequence[str] | None, rows: Iterable[Sequence], comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def grid_csv(grid) -> str:
    """Row-major grid (row i = x index) with extent and resolution in a comment header."""
    x0, x1, y0, y1 = grid.extent
    nx, ny = grid.resolution
    head = f"extent={x0!r},{x1!r},{y0!r},{y1!r} resolution={nx},{ny}"
    return dumps_csv(None, grid.values.tolist(), comments=[head])


def parse_grid_csv(text: str):
    from .radiomap import RadioMapGrid

    lines = text.splitlines()
    head = lines[0].lstrip("# ").split()
    ext = tuple(float(v) for v in head[0].split("=")[1].split(","))
    res = tuple(int(v) for v in head[1].split("=")[1].split(","))
    vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln])
    return RadioMapGrid(ext, res, vals)


def grid_json(grid) -> dict:
    return {"extent": list(grid.extent), "resolution": list(grid.resolution), "values": grid.values}


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bundle(out_dir: Path, files: dict[str, str], manifest_name: str = "manifest.json", extra=None) -> dict:
    """Write every file atomically, then a manifest listing them with digests."""
    out_dir = Path(out_dir)
    entries = []
    for name in sorted(files):
        atomic_write(out_dir / name, files[name])
        entries.append({"file": name, "sha256": hashlib.sha256(files[name].encode()).hexdigest()})
    manifest = {"files": entries, **(extra or {})}
    atomic_write(out_dir / manifest_name, dumps_json(manifest))
    return manifest
