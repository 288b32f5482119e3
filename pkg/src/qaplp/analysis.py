"""Reading LP points back as mixtures of perfect matchings.

The support graph keeps the arcs whose diagonal flow is positive.  A
*layered path* picks one support arc per stage such that heads chain into
tails, no level repeats, and every pair (and triple) variable linking two
(three) of its arcs is positive.  Each layered path spells out a matching;
peeling paths off with their flow value is the decomposition, and the audit
compares everything against the exact enumeration oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .indexer import VariableSpace
from .instance import Matching, QapInstance, evaluate
from .model import SparseModel, embed

SUPPORT_TOL = 1e-7
NEGATIVE_TOL = 1e-9
INTEGRALITY_TOL = 1e-6
GAP_TOL = 1e-6

CLAIM_CONSISTENT = "claim-consistent"
GAP_FOUND = "gap-found"
NONINTEGRAL_VERTEX = "nonintegral-vertex"
DECOMPOSITION_FAILED = "decomposition-failed"
CLASSIFICATIONS = (CLAIM_CONSISTENT, GAP_FOUND, NONINTEGRAL_VERTEX, DECOMPOSITION_FAILED)

DECOMPOSED = "decomposed"
RESIDUAL_STUCK = "residual-stuck"


def _vector(sol) -> np.ndarray:
    return np.asarray(getattr(sol, "x", sol), dtype=float)


@dataclass(frozen=True)
class SupportGraph:
    arcs: dict[int, list[tuple[int, int, int]]]
    mass: dict[int, float]

    def chi(self, r: int) -> int:
        return len(self.arcs[r])


@dataclass(frozen=True)
class LayeredPath:
    arcs: tuple[tuple[int, int, int], ...]
    flow: float

    @property
    def facilities(self) -> tuple[int, ...]:
        return (self.arcs[0][0], *(a[2] for a in self.arcs))

    @property
    def matching(self) -> Matching:
        return Matching(self.facilities)


@dataclass
class DecompositionReport:
    components: list[tuple[Matching, float]]
    residual: float
    weight_sum: float
    verdict: str
    values: list[float] = field(default_factory=list)
    min_entry: float = 0.0

    @property
    def decomposed(self) -> bool:
        return self.verdict == DECOMPOSED

    def weighted_value(self) -> float:
        return math.fsum(w * v for (_, w), v in zip(self.components, self.values))


def support_graph(space: VariableSpace, sol, tol: float = SUPPORT_TOL) -> SupportGraph:
    x = _vector(sol)
    arcs: dict[int, list] = {r: [] for r in space.stages}
    mass: dict[int, float] = {r: 0.0 for r in space.stages}
    for col, (i, r, j) in enumerate(space.diag):
        mass[r] += x[col]
        if x[col] > tol:
            arcs[r].append((i, r, j))
    return SupportGraph(arcs, mass)


def flow_value(space: VariableSpace, sol, path: LayeredPath | Matching) -> float:
    """Smallest lifted coordinate (diagonal, pair or triple) along the path."""
    x = _vector(sol)
    m = path.matching if isinstance(path, LayeredPath) else path
    return float(x[embed(space, m).astype(bool)].min())


def find_layered_path(space: VariableSpace, sol, tol: float = SUPPORT_TOL) -> LayeredPath | None:
    """Depth-first search for the first layered path in stage-major,
    lexicographic arc order."""
    x = _vector(sol)
    graph = support_graph(space, x, tol)
    last = space.n - 1

    def positive(key: tuple) -> bool:
        col = space.col(key)
        return col is not None and x[col] > tol

    by_tail: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    for r, arcs in graph.arcs.items():
        for a in arcs:
            by_tail.setdefault((a[0], r), []).append(a)

    def extend(path: list, used: set) -> list | None:
        if len(path) == last:
            return path
        r = len(path) + 1
        head = path[-1][2]
        for arc in by_tail.get((head, r), ()):
            if arc[2] in used:
                continue
            if not all(positive((*a, *arc)) for a in path):
                continue
            if not all(
                positive((*path[p], *path[q], *arc))
                for p in range(len(path))
                for q in range(p + 1, len(path))
            ):
                continue
            found = extend(path + [arc], used | {arc[2]})
            if found:
                return found
        return None

    for arc in graph.arcs.get(1, ()):
        found = extend([arc], {arc[0], arc[2]})
        if found:
            path = LayeredPath(tuple(found), 0.0)
            return LayeredPath(path.arcs, flow_value(space, x, path))
    return None


def decompose(space: VariableSpace, sol, tol: float = SUPPORT_TOL, inst: QapInstance | None = None,
              max_paths: int | None = None) -> DecompositionReport:
    """Peel layered paths off a copy of the point until nothing is left."""
    work = _vector(sol).copy()
    components: list[tuple[Matching, float]] = []
    verdict = None
    limit = max_paths if max_paths is not None else math.factorial(space.n)
    while np.abs(work).max(initial=0.0) > tol and len(components) < limit:
        path = find_layered_path(space, work, tol)
        if path is None:
            break
        components.append((path.matching, path.flow))
        work -= path.flow * embed(space, path.matching)
        if work.min() < -NEGATIVE_TOL:
            verdict = RESIDUAL_STUCK
            break
    residual = float(np.abs(work).max(initial=0.0))
    weight_sum = math.fsum(w for _, w in components)
    if verdict is None:
        ok = residual <= tol and abs(weight_sum - 1.0) <= tol
        verdict = DECOMPOSED if ok else RESIDUAL_STUCK
    values = [evaluate(inst, m) for m, _ in components] if inst is not None else []
    return DecompositionReport(components, residual, weight_sum, verdict, values, float(work.min(initial=0.0)))


def vertex_is_integral(sol, tol: float = INTEGRALITY_TOL) -> bool:
    x = _vector(sol)
    return bool(np.all(np.minimum(np.abs(x), np.abs(x - 1.0)) <= tol))


@dataclass
class ClaimAudit:
    name: str
    lp_value: float
    oracle_value: float | None
    oracle_matching: Matching | None
    gap: float | None
    relative_gap: float | None
    integral: bool
    decomposition: DecompositionReport
    classification: str

    @property
    def pbm_count(self) -> int:
        return len({m for m, _ in self.decomposition.components})

    def to_dict(self) -> dict:
        d = self.decomposition
        return {
            "name": self.name,
            "lp_value": self.lp_value,
            "oracle_value": self.oracle_value,
            "oracle_matching": str(self.oracle_matching) if self.oracle_matching else None,
            "gap": self.gap,
            "relative_gap": self.relative_gap,
            "integral": self.integral,
            "decomposition": d.verdict,
            "residual": d.residual,
            "weight_sum": d.weight_sum,
            "pbm_count": self.pbm_count,
            "matchings": [[str(m), w] for m, w in d.components],
            "classification": self.classification,
        }


def classify(gap: float | None, scale: float, integral: bool, decomposed: bool) -> str:
    if gap is not None and abs(gap) > GAP_TOL * max(1.0, scale):
        return GAP_FOUND
    if not decomposed:
        return DECOMPOSITION_FAILED
    if not integral:
        return NONINTEGRAL_VERTEX
    return CLAIM_CONSISTENT


def audit(inst: QapInstance, model: SparseModel, sol, oracle_result: tuple[Matching, float] | None,
          tol: float = SUPPORT_TOL) -> ClaimAudit:
    """Compare an LP optimum against the QAP optimum and the matching structure.

    ``oracle_result`` is ``brute_force_optimum(inst)`` or ``None`` when the
    instance is too large to enumerate; gap fields are then omitted.
    """
    x = _vector(sol)
    lp_value = float(getattr(sol, "objective", model.c @ x))
    report = decompose(model.space, x, tol, inst=inst)
    integral = vertex_is_integral(x)
    if oracle_result is not None:
        oracle_m, oracle_v = oracle_result
        gap = oracle_v - lp_value
        rel = gap / max(abs(oracle_v), 1.0)
    else:
        oracle_m = oracle_v = gap = rel = None
    scale = abs(oracle_v) if oracle_v is not None else abs(lp_value)
    return ClaimAudit(
        name=model.name or inst.name,
        lp_value=lp_value,
        oracle_value=oracle_v,
        oracle_matching=oracle_m,
        gap=gap,
        relative_gap=rel,
        integral=integral,
        decomposition=report,
        classification=classify(gap, scale, integral, report.decomposed),
    )

