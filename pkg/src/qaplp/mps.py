"""Fixed-column MPS export and a whitespace-tokenizing reader.

Fields start at columns 2, 5, 15, 25, 40 and 50.  Canonical names such as
``Z_1_2_3_4_5_6_7_8_9`` are longer than the classic 8-character slots; such
a name pushes the following fields right by the overflow, keeping at least
one blank between fields, so any reader that splits on whitespace (free MPS)
reads the file.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

OBJ_ROW = "COST"
RHS_SET = "RHS"
FIELD_STARTS = (1, 4, 14, 24, 39, 49)


class MpsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MpsData:
    """An equality-form LP as read back from MPS: ``min c x, A x = b, x >= 0``."""

    name: str
    row_names: list[str]
    col_names: list[str]
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def _line(*fields: str) -> str:
    out = ""
    for start, text in zip(FIELD_STARTS, fields):
        if not text:
            continue
        pad = start - len(out)
        out += " " * (pad if pad > 0 else 1) + text
    return out.rstrip()


def format_mps(name: str, row_names, col_names, A, b, c) -> str:
    A = sp.csc_matrix(A)
    lines = [f"NAME          {name or 'QAPLP'}", "ROWS", _line("N", OBJ_ROW)]
    lines.extend(_line("E", rn) for rn in row_names)
    lines.append("COLUMNS")
    for col, cname in enumerate(col_names):
        entries = []
        if c[col] != 0:
            entries.append((OBJ_ROW, c[col]))
        lo, hi = A.indptr[col], A.indptr[col + 1]
        entries.extend((row_names[r], v) for r, v in zip(A.indices[lo:hi], A.data[lo:hi]))
        if not entries:
            entries.append((OBJ_ROW, 0.0))
        for k in range(0, len(entries), 2):
            chunk = entries[k:k + 2]
            fields = ["", cname]
            for rn, v in chunk:
                fields.extend([rn, _num(v)])
            lines.append(_line(*fields))
    lines.append("RHS")
    for r, value in enumerate(b):
        if value != 0:
            lines.append(_line("", RHS_SET, row_names[r], _num(value)))
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def export_mps(model, path: str | Path) -> Path:
    """Write a :class:`~qaplp.model.SparseModel` (or :class:`MpsData`) to ``path``."""
    path = Path(path)
    text = format_mps(model.name, model.row_names, model.col_names, model.A, model.b, model.c)
    path.write_text(text)
    return path


def parse_mps(text: str) -> MpsData:
    name = ""
    section = None
    row_names: list[str] = []
    row_index: dict[str, int] = {}
    obj_row = None
    col_names: list[str] = []
    col_index: dict[str, int] = {}
    rows_i: list[int] = []
    cols_j: list[int] = []
    vals: list[float] = []
    cost: dict[int, float] = {}
    rhs: dict[int, float] = {}
    for raw in text.splitlines():
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        tokens = raw.split()
        if not raw[0].isspace():
            head = tokens[0].upper()
            if head == "NAME":
                name = tokens[1] if len(tokens) > 1 else ""
                continue
            if head == "ENDATA":
                break
            if head not in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "RANGES"):
                raise MpsError(f"unknown section {tokens[0]!r}")
            section = head
            continue
        if section == "ROWS":
            kind, rname = tokens[0].upper(), tokens[1]
            if kind == "N":
                if obj_row is None:
                    obj_row = rname
                continue
            if kind != "E":
                raise MpsError(f"only equality rows are supported, got {kind} {rname}")
            row_index[rname] = len(row_names)
            row_names.append(rname)
        elif section == "COLUMNS":
            cname, pairs = tokens[0], tokens[1:]
            if len(pairs) % 2:
                raise MpsError(f"odd field count in COLUMNS line: {raw!r}")
            if cname not in col_index:
                col_index[cname] = len(col_names)
                col_names.append(cname)
            j = col_index[cname]
            for rname, value in zip(pairs[::2], pairs[1::2]):
                if rname == obj_row:
                    cost[j] = cost.get(j, 0.0) + float(value)
                elif rname in row_index:
                    rows_i.append(row_index[rname])
                    cols_j.append(j)
                    vals.append(float(value))
                else:
                    raise MpsError(f"unknown row {rname!r}")
        elif section == "RHS":
            pairs = tokens[1:] if len(tokens) % 2 else tokens
            for rname, value in zip(pairs[::2], pairs[1::2]):
                if rname == obj_row:
                    continue
                rhs[row_index[rname]] = float(value)
        elif section in ("BOUNDS", "RANGES"):
            raise MpsError(f"{section} section not supported (columns are x >= 0)")
    m, ncols = len(row_names), len(col_names)
    A = sp.csr_matrix((vals, (rows_i, cols_j)), shape=(m, ncols))
    A.sum_duplicates()
    A.sort_indices()
    b = np.zeros(m)
    for r, v in rhs.items():
        b[r] = v
    c = np.zeros(ncols)
    for j, v in cost.items():
        c[j] = v
    return MpsData(name, row_names, col_names, A, b, c)


def read_mps(path: str | Path) -> MpsData:
    return parse_mps(Path(path).read_text())
