"""CSV readers for the command line. Every error names the file, row and column.

Row numbers count physical lines, the header being row 1. Unit ids must be
integers; rows are returned sorted by unit id.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .core import CovariateMatrix, PanelData, ScienceTable
from .errors import ParseError


def _read(path) -> tuple:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise ParseError(f"{path}: file not found") from None
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 ({exc.reason})") from None
    # keep physical row numbers, drop blank lines
    numbered = [(i + 1, [c.strip() for c in r]) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not numbered:
        raise ParseError(f"{path}: empty file, expected a header row")
    return path, numbered[0], numbered[1:]


def _header(path, head, expected: list | None, min_extra: int = 0) -> list:
    row_no, cols = head
    if not cols or cols[0] != "unit":
        raise ParseError(f"{path}: row {row_no}, column 1: missing header (expected first column 'unit', got {cols[0]!r})")
    if expected is not None:
        for j, name in enumerate(cols):
            if j >= len(expected):
                raise ParseError(f"{path}: row {row_no}, column {j + 1}: unexpected extra column {name!r}")
            if name != expected[j]:
                raise ParseError(f"{path}: row {row_no}, column {j + 1}: expected header {expected[j]!r}, got {name!r}")
        if len(cols) < len(expected):
            raise ParseError(f"{path}: row {row_no}: header is missing column {expected[len(cols)]!r}")
    elif len(cols) < 1 + min_extra:
        raise ParseError(f"{path}: row {row_no}: header needs at least {min_extra} column(s) after 'unit'")
    return cols


def _number(path, row_no: int, col: int, name: str, cell: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"{path}: row {row_no}, column {col} ({name}): non-numeric cell {cell!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"{path}: row {row_no}, column {col} ({name}): non-finite cell {cell!r}")
    return v


def _unit(path, row_no: int, cell: str) -> int:
    try:
        return int(cell)
    except ValueError:
        raise ParseError(f"{path}: row {row_no}, column 1 (unit): unit id must be an integer, got {cell!r}") from None


def _table(path, head, body, cols: list) -> tuple:
    """Parse a unit-keyed numeric table; returns (sorted unit ids, values matrix)."""
    if not body:
        raise ParseError(f"{path}: no data rows after the header")
    seen: dict = {}
    values = {}
    for row_no, cells in body:
        if len(cells) != len(cols):
            raise ParseError(f"{path}: row {row_no}: expected {len(cols)} cells, found {len(cells)}")
        u = _unit(path, row_no, cells[0])
        if u in seen:
            raise ParseError(f"{path}: row {row_no}, column 1 (unit): duplicate unit {u} (first seen on row {seen[u]})")
        seen[u] = row_no
        values[u] = [_number(path, row_no, j + 1, cols[j], c) for j, c in enumerate(cells) if j > 0]
    units = sorted(values)
    return units, np.array([values[u] for u in units], dtype=float)


def parse_covariates(path) -> tuple:
    """``unit,x1,...,xd`` -> (unit ids, CovariateMatrix)."""
    path, head, body = _read(path)
    cols = _header(path, head, None, min_extra=1)
    units, vals = _table(path, head, body, cols)
    return units, CovariateMatrix(vals, tuple(cols[1:]))


def parse_science_table(path) -> tuple:
    """``unit,y1,y0`` -> (unit ids, ScienceTable)."""
    path, head, body = _read(path)
    cols = _header(path, head, ["unit", "y1", "y0"])
    units, vals = _table(path, head, body, cols)
    return units, ScienceTable(vals[:, 0], vals[:, 1])


def parse_baselines(path) -> tuple:
    """``unit,g`` -> (unit ids, baseline vector)."""
    path, head, body = _read(path)
    cols = _header(path, head, ["unit", "g"])
    units, vals = _table(path, head, body, cols)
    return units, vals[:, 0]


def parse_observed(path) -> dict:
    """``unit,w,y`` or ``unit,w,y,stratum`` -> dict of units, w, y and optional strata labels."""
    path, head, body = _read(path)
    has_stratum = len(head[1]) == 4
    cols = _header(path, head, ["unit", "w", "y", "stratum"] if has_stratum else ["unit", "w", "y"])
    units, vals = _table(path, head, body, cols)
    by_unit = {_unit(path, r, c[0]): r for r, c in body}
    w = vals[:, 0]
    for u, wi in zip(units, w):
        if wi not in (0.0, 1.0):
            raise ParseError(f"{path}: row {by_unit[u]}, column 2 (w): assignment must be 0 or 1, got {wi!r}")
    out = {"units": units, "w": w.astype(np.int8), "y": vals[:, 1]}
    if has_stratum:
        out["stratum"] = vals[:, 2]
    return out


def parse_panel(path, T0: int) -> tuple:
    """Long-form ``unit,period,outcome`` -> (unit ids, period ids, PanelData)."""
    path, head, body = _read(path)
    cols = _header(path, head, ["unit", "period", "outcome"])
    if not body:
        raise ParseError(f"{path}: no data rows after the header")
    cells: dict = {}
    for row_no, row in body:
        if len(row) != 3:
            raise ParseError(f"{path}: row {row_no}: expected 3 cells, found {len(row)}")
        u = _unit(path, row_no, row[0])
        try:
            t = int(row[1])
        except ValueError:
            raise ParseError(f"{path}: row {row_no}, column 2 (period): period must be an integer, got {row[1]!r}") from None
        if (u, t) in cells:
            raise ParseError(f"{path}: row {row_no}: duplicate cell (unit {u}, period {t})")
        cells[(u, t)] = _number(path, row_no, 3, cols[2], row[2])
    units = sorted({u for u, _ in cells})
    periods = sorted({t for _, t in cells})
    Y = np.empty((len(units), len(periods)))
    for i, u in enumerate(units):
        for j, t in enumerate(periods):
            if (u, t) not in cells:
                raise ParseError(f"{path}: incomplete grid, missing cell (unit {u}, period {t})")
            Y[i, j] = cells[(u, t)]
    if not 1 <= T0 < len(periods):
        raise ParseError(f"{path}: T0 must be < T and >= 1 (T0={T0}, T={len(periods)})")
    return units, periods, PanelData(Y, T0)
