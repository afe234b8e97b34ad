"""On-disk formats.

counts CSV
    header ``trial,neuron,bin,count``; one row per entry, trial-major then
    neuron then bin, all indices zero-based.
matrix CSV
    no header, one row per matrix row.
JSON
    matrices as ``{"rows": r, "cols": c, "data": [row-major]}``; floats are
    written at ``repr`` precision so they round-trip exactly.
"""
from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .dataset import CountDataset

COUNTS_HEADER = ["trial", "neuron", "bin", "count"]


class DataFormatError(ValueError):
    pass


def _num(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def write_counts_csv(path, Y: CountDataset) -> None:
    N, T, R = Y.counts.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COUNTS_HEADER)
        for r in range(R):
            for i in range(N):
                for t in range(T):
                    w.writerow([r, i, t, _num(Y.counts[i, t, r])])


def read_counts_csv(path) -> CountDataset:
    """Parse a counts CSV; errors name the line and column of the first problem."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != COUNTS_HEADER:
        raise DataFormatError(f"{path}: line 1: expected header {','.join(COUNTS_HEADER)}")
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise DataFormatError(f"{path}: line {lineno}: expected 4 columns, got {len(row)}")
        vals = []
        for col, cell in zip(COUNTS_HEADER, row):
            try:
                v = float(cell) if col == "count" else int(cell)
            except ValueError:
                raise DataFormatError(f"{path}: line {lineno}, column '{col}': cannot parse {cell!r}") from None
            if col == "count" and (not math.isfinite(v) or v < 0):
                raise DataFormatError(f"{path}: line {lineno}, column 'count': invalid count {cell!r}")
            if col != "count" and v < 0:
                raise DataFormatError(f"{path}: line {lineno}, column '{col}': negative index {v}")
            vals.append(v)
        entries.append(vals)
    if not entries:
        raise DataFormatError(f"{path}: no data rows")
    idx = np.array([e[:3] for e in entries], dtype=int)
    R, N, T = idx.max(axis=0) + 1
    counts = np.full((N, T, R), np.nan)
    for (r, i, t), e, lineno in zip(idx, entries, range(2, len(entries) + 2)):
        if not np.isnan(counts[i, t, r]):
            raise DataFormatError(f"{path}: line {lineno}: duplicate entry for trial {r}, neuron {i}, bin {t}")
        counts[i, t, r] = e[3]
    if np.isnan(counts).any():
        i, t, r = np.argwhere(np.isnan(counts))[0]
        raise DataFormatError(f"{path}: missing entry for trial {r}, neuron {i}, bin {t}")
    return CountDataset(counts)


def matrix_record(A) -> dict:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return {"rows": int(A.shape[0]), "cols": int(A.shape[1]), "data": [float(v) for v in A.ravel()]}


def matrix_from_record(rec: dict) -> np.ndarray:
    return np.array(rec["data"], dtype=float).reshape(rec["rows"], rec["cols"])


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, allow_nan=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_matrix_csv(path, A) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in A:
            w.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        return np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def ensure_dir(path) -> str:
    if not os.path.isdir(path):
        raise FileNotFoundError(f"output directory does not exist: {path}")
    return os.fspath(path)
