"""Artifact writers: CSV, binary PGM (P5) and JSON, all byte-deterministic."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np


def _num(x) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_grid_csv(path, values: np.ndarray, xs, ys, names=("x", "y", "value")) -> Path:
    """Long-format CSV of a 2-D array indexed values[j, i] at (xs[i], ys[j])."""
    rows = []
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            rows.append((x, y, values[j, i]))
    return write_csv(path, names, rows)


def normalize_8bit(values: np.ndarray) -> np.ndarray:
    """Per-map min-max scaling to 0..255; NaN cells become 0, constant maps 128."""
    v = np.asarray(values, dtype=float)
    finite = ~np.isnan(v)
    out = np.zeros(v.shape, dtype=np.uint8)
    if not finite.any():
        return out
    lo, hi = v[finite].min(), v[finite].max()
    if hi - lo <= 0:
        out[finite] = 128
        return out
    scaled = np.rint((v[finite] - lo) / (hi - lo) * 255)
    out[finite] = np.clip(scaled, 0, 255).astype(np.uint8)
    return out


def write_pgm(path, values: np.ndarray, *, flip_rows: bool = True) -> Path:
    """Binary 8-bit PGM of ``values[row, col]``.

    With ``flip_rows`` the last row is drawn at the top, so a map indexed by
    increasing y shows north up.
    """
    img = normalize_8bit(values)
    if flip_rows:
        img = img[::-1]
    h, w = img.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    # NaN/inf are not valid JSON
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, np.floating):
        return _clean(float(o))
    return o


def dumps(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True, default=_default, allow_nan=False) + "\n"


def write_json(path, doc) -> Path:
    path = Path(path)
    path.write_text(dumps(doc), encoding="utf-8")
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
