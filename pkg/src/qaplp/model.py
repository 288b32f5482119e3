"""Assembly of the layered-flow LP for a QAP instance.

Every row is an equality.  Rows are grouped into families:

=======  ==============================================================
F1       one unit of flow leaves stage 1
F2       flow on a later arc equals the pair mass reaching it from stage 1
F3       node balance of diagonal flow between consecutive stages
F4       node balance inside the flow layer of each arc
F5-F7    each pair variable equals a marginal of the triple variables
F8       the layer of every stage-1 arc reaches every other level
F9       the same visit requirement inside each stage-1 sub-layer
F10a-e   optional valid equalities (diagonal/pair and pair/triple ties)
=======  ==============================================================

Variables that the visit restrictions would force to zero are absent from
the :class:`~qaplp.indexer.VariableSpace`, so those restrictions never
appear as rows.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .indexer import VariableSpace, build_space
from .instance import InstanceError, Matching, QapInstance, handling_cost

FAMILY_ORDER = (
    "F1", "F2", "F3", "F4", "F5", "F6", "F7", "F8", "F9",
    "F10a", "F10b", "F10c", "F10d", "F10e",
)
CUT_FAMILIES = frozenset(FAMILY_ORDER[9:])


@dataclass(frozen=True, eq=False)
class SparseModel:
    """``min c x  s.t.  A x = b,  x >= 0`` with named rows and columns."""

    space: VariableSpace
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    row_keys: tuple[tuple, ...]
    valid_cuts: bool = True
    name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    @property
    def row_names(self) -> list[str]:
        return [row_name(k) for k in self.row_keys]

    @property
    def col_names(self) -> list[str]:
        return self.space.names()

    def row_family(self, row: int) -> str:
        return self.row_keys[row][0]

    def family_counts(self) -> dict[str, int]:
        counts: dict[str, int] = defaultdict(int)
        for key in self.row_keys:
            counts[key[0]] += 1
        return dict(counts)

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x - self.b


def row_name(key: tuple) -> str:
    family, *idx = key
    return "_".join([family, *map(str, idx)])


def cost_c(inst: QapInstance, i: int, r: int, j: int) -> float:
    """Cost of arc ``(i, r, j)``: opcost of ``i`` at ``r`` plus the handling
    cost between sites ``r`` and ``r+1``; the last stage also pays the
    opcost of ``j`` at site ``n``."""
    n = inst.n
    if i == j:
        raise InstanceError(f"arc ({i},{r},{j}) does not exist")
    if not 1 <= r <= n - 1:
        raise InstanceError(f"stage {r} outside 1..{n - 1}")
    value = inst.opcost[i - 1, r - 1] + handling_cost(inst, i, r, j, r + 1)
    if r == n - 1:
        value += inst.opcost[j - 1, n - 1]
    return float(value)


def cost_vector(inst: QapInstance, space: VariableSpace) -> np.ndarray:
    c = np.zeros(space.size)
    for col, (i, r, j) in enumerate(space.diag):
        c[col] = cost_c(inst, i, r, j)
    off = space.offset("pair")
    for col, (i, r, _j, _k, s, t) in enumerate(space.pair, start=off):
        c[col] = handling_cost(inst, i, r, t, s + 1)
    return c


def _row_entries(space: VariableSpace, valid_cuts: bool) -> dict[tuple, dict[int, int]]:
    """Scatter every column's coefficients into its rows.

    The traversal goes column by column; each column knows which rows it
    enters and with what sign.
    """
    n = space.n
    last = n - 1
    rows: dict[tuple, dict[int, int]] = defaultdict(dict)
    levels = range(1, n + 1)

    def add(key: tuple, col: int, coef: int) -> None:
        entry = rows[key]
        entry[col] = entry.get(col, 0) + coef

    for col, (i, r, j) in enumerate(space.diag):
        if r == 1:
            add(("F1",), col, 1)
            for t in levels:
                if t not in (i, j):
                    add(("F8", i, j, t), col, 1)
        else:
            add(("F2", i, r, j), col, 1)
            add(("F3", r, i), col, -1)
        if r + 1 <= last:
            add(("F3", r + 1, j), col, 1)
        if valid_cuts:
            for s in range(1, r):
                add(("F10a", i, r, j, s), col, 1)
            for s in range(r + 1, last + 1):
                add(("F10b", i, r, j, s), col, 1)

    off = space.offset("pair")
    for col, (i, r, j, k, s, t) in enumerate(space.pair, start=off):
        if r == 1:
            add(("F2", k, s, t), col, -1)
            add(("F8", i, j, t), col, -1)
            for lv in levels:
                if lv not in (i, j, k, t):
                    add(("F9", i, j, k, s, t, lv), col, 1)
        if s <= n - 2:
            add(("F4", i, r, j, t, s), col, 1)
        if s - 1 >= r + 1:
            add(("F4", i, r, j, k, s - 1), col, -1)
        for q in range(s + 1, last + 1):
            add(("F5", i, r, j, k, s, t, q), col, 1)
        for p in range(1, r):
            add(("F6", i, r, j, k, s, t, p), col, 1)
        for mid in range(r + 1, s):
            add(("F7", i, r, j, k, s, t, mid), col, 1)
        if valid_cuts:
            add(("F10a", k, s, t, r), col, -1)
            add(("F10b", i, r, j, s), col, -1)

    off = space.offset("triple")
    for col, (u, p, v, i, r, j, k, s, t) in enumerate(space.triple, start=off):
        add(("F5", u, p, v, i, r, j, s), col, -1)
        add(("F6", i, r, j, k, s, t, p), col, -1)
        add(("F7", u, p, v, k, s, t, r), col, -1)
        if p == 1:
            # level i is visited before stage s as the tail of the middle arc
            if i not in (u, v, k, t):
                add(("F9", u, v, k, s, t, i), col, -1)
            # level t is visited after stage r as the head of the last arc
            add(("F9", u, v, i, r, j, t), col, -1)
        if valid_cuts:
            # outer pair (r, s), free stage p before
            for q in range(r + 1, s):
                add(("F10c", i, r, j, k, s, t, p, q), col, 1)
            for q in range(s + 1, last + 1):
                add(("F10d", i, r, j, k, s, t, p, q), col, 1)
            # outer pair (p, s), free stage r between
            for g in range(1, p):
                add(("F10c", u, p, v, k, s, t, g, r), col, -1)
            for q in range(s + 1, last + 1):
                add(("F10e", u, p, v, k, s, t, r, q), col, 1)
            # outer pair (p, r), free stage s after
            for g in range(1, p):
                add(("F10d", u, p, v, i, r, j, g, s), col, -1)
            for mid in range(p + 1, r):
                add(("F10e", u, p, v, i, r, j, mid, s), col, -1)
    return rows


def _sort_key(key: tuple) -> tuple:
    return (FAMILY_ORDER.index(key[0]), key[1:])


def build_model(
    inst: QapInstance, space: VariableSpace | None = None, valid_cuts: bool = True
) -> SparseModel:
    """Build the LP relaxation (nonnegative columns, no upper bounds)."""
    if space is None:
        space = build_space(inst.n)
    if space.n != inst.n:
        raise InstanceError(f"variable space is for n={space.n}, instance has n={inst.n}")
    rows = _row_entries(space, valid_cuts)
    keys = sorted((k for k, v in rows.items() if any(v.values())), key=_sort_key)
    indptr = [0]
    indices: list[int] = []
    data: list[int] = []
    for key in keys:
        entry = sorted((c, a) for c, a in rows[key].items() if a)
        indices.extend(c for c, _ in entry)
        data.extend(a for _, a in entry)
        indptr.append(len(indices))
    A = sp.csr_matrix(
        (np.asarray(data, dtype=float), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
        shape=(len(keys), space.size),
    )
    b = np.array([1.0 if k[0] == "F1" else 0.0 for k in keys])
    return SparseModel(
        space=space,
        A=A,
        b=b,
        c=cost_vector(inst, space),
        row_keys=tuple(keys),
        valid_cuts=valid_cuts,
        name=inst.name,
        meta=dict(inst.meta),
    )


def embed(space: VariableSpace, m: Matching) -> np.ndarray:
    """0/1 column vector of the flow path that spells out matching ``m``."""
    if m.n != space.n:
        raise InstanceError(f"matching has size {m.n}, space has n={space.n}")
    a = (0, *m.assign)  # a[t] = facility at site t
    stages = range(1, space.n)
    x = np.zeros(space.size, dtype=np.int64)
    for r in stages:
        x[space.col((a[r], r, a[r + 1]))] = 1
    for r in stages:
        for s in range(r + 1, space.n):
            x[space.col((a[r], r, a[r + 1], a[s], s, a[s + 1]))] = 1
            for q in range(s + 1, space.n):
                x[space.col((a[r], r, a[r + 1], a[s], s, a[s + 1], a[q], q, a[q + 1]))] = 1
    return x


def objective_value(model: SparseModel, x: np.ndarray) -> float:
    x = np.asarray(x)
    if x.shape != (model.space.size,):
        raise ValueError(f"vector has shape {x.shape}, model has {model.space.size} columns")
    return float(model.c @ x)


def integer_matrix(model: SparseModel) -> sp.csr_matrix:
    """Constraint matrix with int64 entries, for exact residual checks."""
    return model.A.astype(np.int64)
