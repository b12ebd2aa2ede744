"""Readers and writers for fvecs and headerless CSV vector files."""

from __future__ import annotations

import csv
import os

import numpy as np

from ..errors import FormatError


def read_fvecs(path) -> np.ndarray:
    """Read ``[int32 d][d x float32]`` little-endian records into an ``(n, d)`` array."""
    data = np.fromfile(path, dtype=np.uint8)
    size = len(data)
    if size == 0:
        return np.zeros((0, 0), dtype=np.float32)
    if size < 4:
        raise FormatError(f"{path}: truncated header", offset=0)
    d = int(data[:4].view("<i4")[0])
    if d <= 0:
        raise FormatError(f"{path}: non-positive dimension {d}", offset=0)
    rec = 4 * (d + 1)
    if size % rec:
        whole = size // rec * rec
        raise FormatError(f"{path}: size {size} is not a multiple of record size {rec}", offset=whole)
    rows = data.view("<i4").reshape(-1, d + 1)
    dims = rows[:, 0]
    bad = np.flatnonzero(dims != d)
    if len(bad):
        raise FormatError(
            f"{path}: record {bad[0]} has dimension {dims[bad[0]]}, expected {d}", offset=int(bad[0]) * rec
        )
    return rows[:, 1:].copy().view("<f4").astype(np.float32)


def write_fvecs(path, X) -> None:
    X = np.asarray(X, dtype="<f4")
    if X.ndim != 2:
        raise ValueError("expected a 2-D array")
    out = np.empty((X.shape[0], X.shape[1] + 1), dtype="<i4")
    out[:, 0] = X.shape[1]
    out[:, 1:] = X.view("<i4")
    out.tofile(path)


def read_csv(path) -> np.ndarray:
    """One vector per line, comma-separated, no header. Blank lines are skipped."""
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            try:
                vals = [float(f) for f in fields]
            except ValueError:
                raise FormatError(f"{path}: non-numeric value on line {lineno}", line=lineno) from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise FormatError(
                    f"{path}: line {lineno} has {len(vals)} values, expected {width}", line=lineno
                )
            rows.append(vals)
    if not rows:
        return np.zeros((0, 0), dtype=np.float32)
    return np.asarray(rows, dtype=np.float32)


def write_csv(path, X) -> None:
    np.savetxt(path, np.asarray(X, dtype=np.float32), delimiter=",", fmt="%.9g")


def read_vectors(path) -> np.ndarray:
    """Dispatch on extension: ``.fvecs`` or anything else as CSV."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if str(path).endswith(".fvecs"):
        return read_fvecs(path)
    return read_csv(path)
