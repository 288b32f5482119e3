"""Variable families over the layered facility/site graph.

Stages are the sites ``1..n-1`` where an arc starts; an arc ``(i, r, j)``
sends flow from facility level ``i`` at stage ``r`` to level ``j`` at stage
``r+1``.  Three families of columns live on these arcs:

* diagonal ``YD(i,r,j)``: flow on one arc,
* pair ``YP(i,r,j,k,s,t)``: joint flow on arcs at stages ``r < s``,
* triple ``Z(u,p,v,i,r,j,k,s,t)``: joint flow on arcs at stages ``p < r < s``.

A pair or triple only exists if its arcs are *admissible* together: reading
every arc as the two claims "level i sits at position r" and "level j sits at
position r+1", the claims must form a partial injection.  Variables failing
that test are the ones the visit restrictions would pin to zero, so they are
simply never created.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class Arc(NamedTuple):
    i: int
    r: int
    j: int


Pair = tuple[int, int, int, int, int, int]
Triple = tuple[int, int, int, int, int, int, int, int, int]

FAMILIES = ("diag", "pair", "triple")


def _partial_injection(arcs: Iterable[Sequence[int]]) -> bool:
    at_position: dict[int, int] = {}
    position_of: dict[int, int] = {}
    for i, r, j in arcs:
        for level, pos in ((i, r), (j, r + 1)):
            if at_position.setdefault(pos, level) != level:
                return False
            if position_of.setdefault(level, pos) != pos:
                return False
    return True


def pair_admissible(a: Sequence[int], b: Sequence[int]) -> bool:
    """Can flow on arc ``a`` later travel on arc ``b`` along one matching path?"""
    if not a[1] < b[1]:
        raise ValueError(f"stage order violated: {tuple(a)} then {tuple(b)}")
    return _partial_injection((a, b))


def triple_admissible(a: Sequence[int], b: Sequence[int], c: Sequence[int]) -> bool:
    if not a[1] < b[1] < c[1]:
        raise ValueError(f"stage order violated: {tuple(a)}, {tuple(b)}, {tuple(c)}")
    return _partial_injection((a, b, c))


def falling(n: int, k: int) -> int:
    """``n (n-1) ... (n-k+1)``, the number of injective maps of k positions."""
    return math.perm(n, k) if 0 <= k <= n else 0


def positions(*stages: int) -> int:
    """Number of distinct positions touched by arcs at the given stages."""
    covered = set()
    for r in stages:
        covered.update((r, r + 1))
    return len(covered)


def count_diag(n: int) -> int:
    return n * (n - 1) * (n - 1)


def count_pair(n: int) -> int:
    return sum(falling(n, positions(r, s)) for r, s in itertools.combinations(range(1, n), 2))


def count_triple(n: int) -> int:
    return sum(
        falling(n, positions(p, r, s)) for p, r, s in itertools.combinations(range(1, n), 3)
    )


def count_pair_closed_form(n: int) -> int:
    """Pair count split into adjacent-stage and gapped stage pairs."""
    if n < 3:
        return 0
    adjacent = (n - 2) * n * (n - 1) * (n - 2)
    gapped = (math.comb(n - 1, 2) - (n - 2)) * n * (n - 1) * (n - 2) * (n - 3)
    return adjacent + gapped


def _chain(n: int, stages: Sequence[int]):
    """Yield level tuples, one per arc-stage, consistent with a partial injection.

    ``stages`` must be increasing.  Each yielded item is a flat tuple
    ``(i1, j1, i2, j2, ...)`` in lexicographic order.
    """
    pos = sorted({p for r in stages for p in (r, r + 1)})
    for levels in itertools.permutations(range(1, n + 1), len(pos)):
        assign = dict(zip(pos, levels))
        yield tuple(x for r in stages for x in (assign[r], assign[r + 1]))


@dataclass(frozen=True)
class VariableSpace:
    """Dense column numbering of all admissible variables for one ``n``.

    Columns are family-major (diagonal, pair, triple) and lexicographic by
    index tuple within a family.
    """

    n: int
    diag: tuple[tuple[int, int, int], ...]
    pair: tuple[Pair, ...]
    triple: tuple[Triple, ...]
    index: dict

    @property
    def size(self) -> int:
        return len(self.diag) + len(self.pair) + len(self.triple)

    @property
    def counts(self) -> dict[str, int]:
        return {"diag": len(self.diag), "pair": len(self.pair), "triple": len(self.triple)}

    @property
    def stages(self) -> range:
        return range(1, self.n)

    def offset(self, family: str) -> int:
        return {"diag": 0, "pair": len(self.diag), "triple": len(self.diag) + len(self.pair)}[family]

    def tuple_of(self, col: int) -> tuple[int, ...]:
        nd, np_ = len(self.diag), len(self.pair)
        if col < 0 or col >= self.size:
            raise IndexError(col)
        if col < nd:
            return self.diag[col]
        if col < nd + np_:
            return self.pair[col - nd]
        return self.triple[col - nd - np_]

    def family_of(self, col: int) -> str:
        nd, np_ = len(self.diag), len(self.pair)
        return "diag" if col < nd else "pair" if col < nd + np_ else "triple"

    def col(self, key: tuple[int, ...]) -> int | None:
        """Column of a diagonal (3), pair (6) or triple (9) tuple, or ``None``."""
        return self.index.get(tuple(key))

    def name(self, col: int) -> str:
        key = self.tuple_of(col)
        prefix = {3: "YD", 6: "YP", 9: "Z"}[len(key)]
        return prefix + "_" + "_".join(str(x) for x in key)

    def names(self) -> list[str]:
        return [self.name(c) for c in range(self.size)]

    def parse_name(self, name: str) -> int | None:
        _, *parts = name.split("_")
        return self.col(tuple(int(p) for p in parts))


def build_space(n: int) -> VariableSpace:
    if n < 2:
        raise ValueError("the layered graph needs n >= 2")
    stages = range(1, n)
    diag = sorted(
        (i, r, j) for r in stages for i in range(1, n + 1) for j in range(1, n + 1) if i != j
    )
    pair = sorted(
        (i, r, j, k, s, t)
        for r, s in itertools.combinations(stages, 2)
        for i, j, k, t in _chain(n, (r, s))
    )
    triple = sorted(
        (u, p, v, i, r, j, k, s, t)
        for p, r, s in itertools.combinations(stages, 3)
        for u, v, i, j, k, t in _chain(n, (p, r, s))
    )
    index = {key: c for c, key in enumerate(itertools.chain(diag, pair, triple))}
    return VariableSpace(n, tuple(diag), tuple(pair), tuple(triple), index)


def growth_exponent(ns: Sequence[int], values: Sequence[float]) -> float:
    """Least-squares slope of ``log(value)`` against ``log(n)``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def variable_counts(n: int) -> dict[str, int]:
    counts = {"diag": count_diag(n), "pair": count_pair(n), "triple": count_triple(n)}
    counts["total"] = sum(counts.values())
    return counts


def count_rows(n: int, valid_cuts: bool = False) -> dict[str, int]:
    """Row counts per family of the assembled model, without building it.

    Every row family is indexed by an admissible arc or pair plus free
    stages/levels, so the counts are sums of falling factorials.
    """
    R = range(1, n)
    pairs = list(itertools.combinations(R, 2))

    def npair(r: int, s: int) -> int:
        return falling(n, positions(r, s))

    arcs = n * (n - 1)
    counts = {
        "F1": 1,
        "F2": (n - 2) * arcs if n >= 3 else 0,
        "F3": max(n - 2, 0) * n,
        "F4": sum(falling(n, 3) for r, s in pairs if s <= n - 2),
        "F5": sum(npair(p, r) * (n - 1 - r) for p, r in pairs),
        "F6": sum(npair(r, s) * (r - 1) for r, s in pairs),
        "F7": sum(npair(p, s) * (s - p - 1) for p, s in pairs),
        "F8": falling(n, 3),
        "F9": sum(npair(1, s) * (n - positions(1, s)) for s in R if s >= 2),
    }
    if valid_cuts:
        counts.update({
            "F10a": arcs * sum(r - 1 for r in R),
            "F10b": arcs * sum(n - 1 - r for r in R),
            "F10c": sum(npair(r, s) * (r - 1) * (s - r - 1) for r, s in pairs),
            "F10d": sum(npair(r, s) * (r - 1) * (n - 1 - s) for r, s in pairs),
            "F10e": sum(npair(r, s) * (s - r - 1) * (n - 1 - s) for r, s in pairs),
        })
    return {k: v for k, v in counts.items() if v}


def growth_report(ns: Sequence[int], valid_cuts: bool = False) -> dict:
    """Variable and row counts per ``n`` with fitted log-log growth exponents."""
    ns = list(ns)
    if any(n < 2 for n in ns):
        raise ValueError("growth report needs every n >= 2")
    table = []
    for n in ns:
        var = variable_counts(n)
        rows = sum(count_rows(n, valid_cuts).values())
        table.append({"n": n, **var, "rows": rows})
    report: dict = {"table": table, "valid_cuts": valid_cuts}
    if len(ns) >= 2:
        report["exponents"] = {
            key: growth_exponent(ns, [t[key] for t in table])
            for key in ("diag", "pair", "triple", "total", "rows")
            if all(t[key] > 0 for t in table)
        }
    return report
