"""Ingestion and emission of the delimited file formats.

P-values arrive as a TSV with an `id<TAB>pvalue` header; permutation
matrices as a TSV whose header names the hypotheses.  All parse errors
report the offending line number.
"""

from __future__ import annotations

import csv

import numpy as np

from .core import PValueVector

__all__ = [
    "load_pvalues",
    "write_pvalues",
    "load_permutation_matrix",
    "write_result_csv",
    "write_summary_csv",
]


def load_pvalues(path) -> PValueVector:
    """Read an `id<TAB>pvalue` TSV, preserving row order."""
    ids: list[str] = []
    values: list[float] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").rstrip("\r")
        if header.split("\t") != ["id", "pvalue"]:
            raise ValueError(f"{path}:1: expected header 'id<TAB>pvalue'")
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0]:
                raise ValueError(f"{path}:{lineno}: expected 'id<TAB>pvalue'")
            name, value = parts
            if name in seen:
                raise ValueError(f"{path}:{lineno}: duplicate id {name!r}")
            try:
                p = float(value)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: p-value {value!r} is not a number") from None
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{path}:{lineno}: p-value {p!r} outside [0, 1]")
            seen.add(name)
            ids.append(name)
            values.append(p)
    if not ids:
        raise ValueError(f"{path}: no p-values found")
    return PValueVector(values, ids)


def write_pvalues(path, pvec: PValueVector) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("id\tpvalue\n")
        for name, value in zip(pvec.ids, pvec.values):
            fh.write(f"{name}\t{value!r}\n")


def load_permutation_matrix(path, ids) -> np.ndarray:
    """Read a TSV whose header lists hypothesis ids; one row per permutation.

    Columns are reordered to match ``ids``; every id must be present.
    """
    ids = [str(s) for s in ids]
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").rstrip("\r").split("\t")
        if sorted(header) != sorted(ids):
            raise ValueError(f"{path}:1: header ids do not match the p-value file")
        order = [header.index(s) for s in ids]
        rows = []
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} values")
            try:
                row = [float(v) for v in parts]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric entry") from None
            rows.append([row[k] for k in order])
    if not rows:
        raise ValueError(f"{path}: no permutation rows found")
    mat = np.asarray(rows, dtype=np.float64)
    if np.any((mat < 0) | (mat > 1)):
        raise ValueError(f"{path}: permuted p-values must lie in [0, 1]")
    return mat


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def write_result_csv(path, pvec: PValueVector, rejected, score_columns: dict[str, np.ndarray]) -> None:
    """Per-hypothesis output: id, pvalue, rejected_pre, then score column(s)."""
    rejected = np.asarray(rejected, dtype=bool)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "pvalue", "rejected_pre", *score_columns.keys()])
        for i, name in enumerate(pvec.ids):
            writer.writerow(
                [
                    name,
                    _fmt(pvec.values[i]),
                    int(rejected[i]),
                    *(_fmt(col[i]) for col in score_columns.values()),
                ]
            )


def write_summary_csv(path, entries: dict[str, object]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        for key, value in entries.items():
            writer.writerow([key, _fmt(value) if isinstance(value, float) else value])
