"""Two-phase revised simplex for ``min c x, A x = b, x >= 0``.

The basis inverse is kept as a sparse LU factorization (SuperLU) of the basis
matrix followed by a product-form eta file, refactorized every
``refactor_every`` pivots or when the pivot element computed by FTRAN and by
the pivot row disagree.  Pricing is Devex; after ``stall_window``
consecutive degenerate pivots the basic values are shifted by small seeded
amounts (a right-hand-side shift inside the column space of the basis), which
breaks ties in the ratio test.  Once the shifted problem is optimal the shift
is removed and dual simplex pivots restore feasibility.  Bland's rule is the
last resort after ``perturb_limit`` shifts.

The dual form builds the transposed problem
``min -b'(p+ - p-)  s.t.  A'p+ - A'p- + s = c`` and reads the primal point off
its simplex multipliers.  With ``c >= 0`` the slack basis is feasible, so no
phase 1 is needed there.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    form: str = "primal"
    pivot: str = "devex"
    tol_feas: float = 1e-7
    tol_pivot: float = 1e-9
    tol_opt: float = 1e-9
    iter_limit: int = 500_000
    refactor_every: int = 100
    drift_tol: float = 1e-8
    stall_window: int = 1000
    perturb_limit: int = 20
    perturb_scale: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.form not in ("primal", "dual"):
            raise ValueError(f"form must be 'primal' or 'dual', not {self.form!r}")
        if self.pivot not in ("devex", "bland"):
            raise ValueError(f"pivot must be 'devex' or 'bland', not {self.pivot!r}")


@dataclass
class LpSolution:
    """Result of :func:`solve`.

    ``basis`` lists basic columns of the original problem.  In primal form it
    has one entry per row, with ``ncols + i`` standing for the artificial of
    row ``i`` (left basic at zero on a redundant row).  In dual form it lists
    the columns whose dual slacks are nonbasic and ``basis_rows`` the rows
    whose multipliers are basic; ``A[basis_rows, basis]`` is then square and
    nonsingular.
    """

    status: str
    x: np.ndarray
    objective: float
    duals: np.ndarray
    basis: list[int]
    iterations: int
    phase1_iterations: int = 0
    wall_time: float = 0.0
    form: str = "primal"
    basis_rows: list[int] | None = None
    stats: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Factor:
    """LU of the basis matrix plus a product-form eta file."""

    def __init__(self, B: sp.csc_matrix):
        self.lu = spla.splu(B, permc_spec="COLAMD")
        self.etas: list[tuple[int, np.ndarray, np.ndarray, float]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        x = self.lu.solve(a)
        for r, idx, vals, inv in self.etas:
            xr = x[r]
            if xr != 0.0:
                x[idx] += vals * xr
                x[r] = xr * inv
        return x

    def btran(self, w: np.ndarray) -> np.ndarray:
        w = w.copy()
        for r, idx, vals, inv in reversed(self.etas):
            w[r] = w[idx] @ vals + w[r] * inv
        return self.lu.solve(w, trans="T")

    def update(self, r: int, alpha: np.ndarray, tol: float) -> None:
        ar = alpha[r]
        idx = np.flatnonzero(np.abs(alpha) > tol * 1e-3)
        idx = idx[idx != r]
        self.etas.append((r, idx, -alpha[idx] / ar, 1.0 / ar))


class _Engine:
    """Working state of one simplex run over ``[A | I_art]``."""

    def __init__(self, A: sp.csc_matrix, b: np.ndarray, opts: SolverOptions, basis: list[int]):
        self.m, self.ncols = A.shape
        self.opts = opts
        self.Afull = sp.hstack([A, sp.identity(self.m, format="csc")], format="csc")
        self.AT = self.Afull.T.tocsr()
        self.b = b
        self.b_eff = np.asarray(b, dtype=float).copy()
        self.perturbed = False
        self.perturbations = 0
        self.cleanup_pivots = 0
        self.rng = np.random.default_rng(opts.seed)
        self.basis = list(basis)
        self.N = self.ncols + self.m
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[self.basis] = True
        # artificials that left the basis are retired for good
        self.allowed = np.ones(self.N, dtype=bool)
        self.allowed[self.ncols:] = False
        self.iterations = 0
        self.refactors = 0
        self.degenerate_run = 0
        self.bland = opts.pivot == "bland"
        self.weights = np.ones(self.N)
        self._refactor()

    def _column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        lo, hi = self.Afull.indptr[j], self.Afull.indptr[j + 1]
        col[self.Afull.indices[lo:hi]] = self.Afull.data[lo:hi]
        return col

    def _refactor(self) -> None:
        B = self.Afull[:, self.basis].tocsc()
        try:
            self.factor = _Factor(B)
        except RuntimeError as exc:
            raise SolverError(f"singular basis at iteration {self.iterations}: {exc}") from exc
        self.refactors += 1
        if self.refactors % 10 == 0:
            lu = self.factor.lu
            log.debug("refactor %d: basis nnz %d, LU nnz %d", self.refactors, B.nnz, lu.L.nnz + lu.U.nnz)
        self.xB = self.factor.ftran(self.b_eff.copy())
        self.pivots_since_refactor = 0
        self.d = None

    def run(self, cost: np.ndarray, phase: int, deadline: int) -> str:
        while True:
            status = self._primal(cost, phase, deadline)
            if status == "stalled":
                self._perturb(phase)
                continue
            if status == OPTIMAL and self.perturbed:
                self._unperturb()
                status = self._dual_cleanup(cost, phase, deadline)
                if status == OPTIMAL:
                    continue
            return status

    def _perturb(self, phase: int) -> None:
        # phase 2 keeps basic artificials pinned at zero
        pos = np.flatnonzero(np.asarray(self.basis) < self.ncols) if phase == 2 else np.arange(self.m)
        scale = self.opts.perturb_scale * (1.0 + float(np.abs(self.b).max(initial=0.0)))
        delta = scale * (1.0 + self.rng.random(pos.size))
        cols = np.asarray(self.basis)[pos]
        self.b_eff = self.b_eff + self.Afull[:, cols] @ delta
        self.xB[pos] += delta
        self.perturbed = True
        self.perturbations += 1
        self.degenerate_run = 0
        log.debug("shifted %d basic values by ~%.1e at iteration %d", pos.size, scale, self.iterations)

    def _unperturb(self) -> None:
        self.b_eff = np.asarray(self.b, dtype=float).copy()
        self.perturbed = False
        self._refactor()

    def _dual_cleanup(self, cost: np.ndarray, phase: int, deadline: int) -> str:
        """Dual simplex pivots from an optimal but slightly infeasible basis."""
        opts = self.opts
        m = self.m
        while True:
            if self.iterations >= deadline:
                return ITERATION_LIMIT
            basic = np.asarray(self.basis)
            viol = self.xB.copy()
            if phase == 2:
                viol[basic >= self.ncols] = 0.0
            r = int(np.argmin(viol))
            if viol[r] >= -opts.tol_feas:
                np.maximum(self.xB, 0.0, out=self.xB, where=basic < self.ncols)
                return OPTIMAL
            rho = self.factor.btran(np.eye(1, m, r).ravel())
            row = self.AT @ rho
            y = self.factor.btran(cost[self.basis])
            d = np.maximum(cost - self.AT @ y, 0.0)
            cand = np.flatnonzero(self.allowed & ~self.is_basic & (row < -opts.tol_pivot))
            if cand.size == 0:
                return INFEASIBLE
            ratios = d[cand] / -row[cand]
            best = ratios.min()
            ties = cand[ratios <= best + 1e-12 * max(1.0, best)]
            q = int(ties[np.argmax(np.abs(row[ties]))])
            alpha = self.factor.ftran(self._column(q))
            if abs(alpha[r] - row[q]) > opts.drift_tol * (1.0 + abs(row[q])) and self.pivots_since_refactor:
                self._refactor()
                continue
            self._pivot(r, q, alpha, self.xB[r] / alpha[r])
            self.cleanup_pivots += 1

    def _pivot(self, r: int, q: int, alpha: np.ndarray, theta: float) -> None:
        leaving = self.basis[r]
        self.xB -= theta * alpha
        self.xB[r] = theta
        self.basis[r] = q
        self.is_basic[q] = True
        self.is_basic[leaving] = False
        if leaving >= self.ncols:
            self.allowed[leaving] = False
        self.iterations += 1
        self.factor.update(r, alpha, self.opts.tol_pivot)
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= self.opts.refactor_every:
            self._refactor()

    def _primal(self, cost: np.ndarray, phase: int, deadline: int) -> str:
        opts = self.opts
        self.d = None
        m = self.m
        while True:
            if self.iterations >= deadline:
                return ITERATION_LIMIT
            fresh = self.d is None
            if fresh:
                self.d = cost - self.AT @ self.factor.btran(cost[self.basis])
            d = self.d
            candidates = self.allowed & ~self.is_basic & (d < -opts.tol_opt)
            cand = np.flatnonzero(candidates)
            if cand.size == 0:
                if not fresh:
                    self.d = None
                    continue
                return OPTIMAL
            if self.bland:
                q = int(cand[0])
            else:
                score = d[cand] ** 2 / self.weights[cand]
                q = int(cand[np.argmax(score)])
            alpha = self.factor.ftran(self._column(q))

            # ratio test; a basic artificial that the move would disturb
            # must leave at ratio zero (it is pinned to 0 once feasible)
            basic = np.asarray(self.basis)
            art_basic = basic >= self.ncols
            pos = alpha > opts.tol_pivot
            pinned = art_basic & (np.abs(alpha) > opts.tol_pivot) if phase == 2 else np.zeros(m, bool)
            ratios = np.full(m, np.inf)
            ratios[pos] = np.maximum(self.xB[pos], 0.0) / alpha[pos]
            ratios[pinned] = 0.0
            if not np.isfinite(ratios).any():
                # incremental reduced costs drift; confirm before giving up
                if not fresh:
                    self.d = None
                    continue
                if phase == 1:
                    raise SolverError("phase 1 reported unbounded; basis is corrupt")
                return UNBOUNDED
            theta = ratios.min()
            ties = np.flatnonzero(ratios <= theta + 1e-12 * max(1.0, theta))
            if self.bland:
                r = int(ties[np.argmin(basic[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            alpha_r = alpha[r]

            # pivot row: needed for Devex weights and as a drift check
            rho = self.factor.btran(np.eye(1, m, r).ravel())
            row = self.AT @ rho
            drift = abs(row[q] - alpha_r)
            if self.pivots_since_refactor and drift > opts.drift_tol * (1.0 + abs(alpha_r)):
                log.debug("drift %.3e at iteration %d, refactorizing", drift, self.iterations)
                self._refactor()
                continue

            if not self.bland:
                wq = self.weights[q]
                ratio_sq = (row / alpha_r) ** 2
                nonbasic = ~self.is_basic
                self.weights[nonbasic] = np.maximum(self.weights[nonbasic], ratio_sq[nonbasic] * wq)
            self.d = d - (d[q] / alpha_r) * row
            leaving = self.basis[r]
            if not self.bland:
                self.weights[leaving] = max(self.weights[q] / alpha_r**2, 1.0)
            self._pivot(r, q, alpha, theta)
            if self.iterations % 1000 == 0:
                log.debug(
                    "phase %d iteration %d objective %.10g degenerate-run %d bland %s",
                    phase, self.iterations, float(cost[self.basis] @ self.xB), self.degenerate_run, self.bland,
                )

            if theta <= opts.tol_pivot:
                self.degenerate_run += 1
                if not self.bland and self.degenerate_run >= opts.stall_window:
                    if self.perturbations < opts.perturb_limit:
                        return "stalled"
                    log.debug("stalled for %d pivots, switching to Bland", self.degenerate_run)
                    self.bland = True
            else:
                self.degenerate_run = 0
                if opts.pivot == "devex" and self.bland:
                    self.bland = False

    def drive_out_artificials(self) -> int:
        """Pivot structural columns in place of zero-level basic artificials.

        Returns the number of artificials that stay basic (redundant rows).
        """
        stuck = 0
        for r in range(self.m):
            if self.basis[r] < self.ncols:
                continue
            rho = self.factor.btran(np.eye(1, self.m, r).ravel())
            row = self.AT @ rho
            row[self.ncols:] = 0.0
            row[self.is_basic] = 0.0
            q = int(np.argmax(np.abs(row)))
            if abs(row[q]) <= max(self.opts.tol_pivot, 1e-7):
                stuck += 1
                continue
            alpha = self.factor.ftran(self._column(q))
            leaving = self.basis[r]
            theta = self.xB[r] / alpha[r]
            self.xB -= theta * alpha
            self.xB[r] = theta
            self.basis[r] = q
            self.is_basic[q] = True
            self.is_basic[leaving] = False
            self.allowed[leaving] = False
            self.factor.update(r, alpha, self.opts.tol_pivot)
            self.pivots_since_refactor += 1
            if self.pivots_since_refactor >= self.opts.refactor_every:
                self._refactor()
        self._refactor()
        return stuck

    def primal(self) -> np.ndarray:
        x = np.zeros(self.N)
        x[self.basis] = self.xB
        return x


def _unit_columns(A: sp.csc_matrix) -> dict[int, int]:
    """Map row -> a column that is the unit vector of that row (+1)."""
    A = A.tocsc()
    counts = np.diff(A.indptr)
    found: dict[int, int] = {}
    for j in np.flatnonzero(counts == 1):
        k = A.indptr[j]
        if A.data[k] == 1.0 and A.indices[k] not in found:
            found[int(A.indices[k])] = int(j)
    return found


def _solve_standard(A, b, c, opts: SolverOptions) -> tuple[str, _Engine, np.ndarray, int]:
    """Phase 1 + phase 2 on ``A x = b``; returns status, engine, duals, phase-1 iterations."""
    A = sp.csc_matrix(A, dtype=float)
    b = np.asarray(b, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    m, ncols = A.shape
    flip = b < 0
    if flip.any():
        D = sp.diags(np.where(flip, -1.0, 1.0))
        A = (D @ A).tocsc()
        b = np.abs(b)
    units = _unit_columns(A)
    basis = [units.get(i, ncols + i) for i in range(m)]
    eng = _Engine(A, b, opts, basis)

    phase1_iters = 0
    if any(j >= ncols for j in eng.basis):
        cost1 = np.zeros(eng.N)
        cost1[ncols:] = 1.0
        status = eng.run(cost1, phase=1, deadline=opts.iter_limit)
        phase1_iters = eng.iterations
        if status == ITERATION_LIMIT:
            return status, eng, np.zeros(m), phase1_iters
        infeas = float(eng.primal()[ncols:].sum())
        if infeas > opts.tol_feas * max(1.0, float(b.sum())):
            return INFEASIBLE, eng, np.zeros(m), phase1_iters
        eng.drive_out_artificials()
    cost2 = np.zeros(eng.N)
    cost2[:ncols] = c
    status = eng.run(cost2, phase=2, deadline=opts.iter_limit)
    y = eng.factor.btran(cost2[eng.basis])
    if flip.any():
        y = np.where(flip, -y, y)
    return status, eng, y, phase1_iters


def _solve_primal(A, b, c, opts: SolverOptions) -> LpSolution:
    status, eng, y, p1 = _solve_standard(A, b, c, opts)
    ncols = A.shape[1]
    x = eng.primal()[:ncols]
    return LpSolution(
        status=status,
        x=x,
        objective=float(c @ x),
        duals=y,
        basis=list(eng.basis),
        iterations=eng.iterations,
        phase1_iterations=p1,
        form="primal",
        stats={"refactorizations": eng.refactors},
    )


def _solve_dual(A, b, c, opts: SolverOptions) -> LpSolution:
    A = sp.csr_matrix(A, dtype=float)
    m, ncols = A.shape
    AT = A.T.tocsc()
    M = sp.hstack([AT, -AT, sp.identity(ncols, format="csc")], format="csc")
    g = np.concatenate([-np.asarray(b, float), np.asarray(b, float), np.zeros(ncols)])
    status, eng, w, p1 = _solve_standard(M, np.asarray(c, float), g, opts)
    z = eng.primal()[: 2 * m + ncols]
    pi = z[:m] - z[m:2 * m]
    x = -w
    basic = set(eng.basis)
    basis = [j for j in range(ncols) if (2 * m + j) not in basic]
    basis_rows = sorted({j if j < m else j - m for j in eng.basis if j < 2 * m})
    return LpSolution(
        status=status,
        x=x,
        objective=float(np.asarray(c, float) @ x),
        duals=pi,
        basis=basis,
        iterations=eng.iterations,
        phase1_iterations=p1,
        form="dual",
        basis_rows=basis_rows,
        stats={"refactorizations": eng.refactors, "dual_objective": float(np.asarray(b, float) @ pi)},
    )


def solve(model, options: SolverOptions | None = None, **overrides) -> LpSolution:
    """Solve ``min c x, A x = b, x >= 0`` for any object with ``A``, ``b``, ``c``."""
    opts = options or SolverOptions()
    if overrides:
        opts = replace(opts, **overrides)
    A, b, c = model.A, model.b, model.c
    if A.shape[0] == 0 or A.shape[1] == 0:
        raise ValueError("model has no rows or no columns")
    start = time.perf_counter()
    sol = _solve_primal(A, b, c, opts) if opts.form == "primal" else _solve_dual(A, b, c, opts)
    sol.wall_time = time.perf_counter() - start
    log.info("%s form: %s after %d iterations, objective %.10g", sol.form, sol.status, sol.iterations, sol.objective)
    return sol


@dataclass
class VerificationReport:
    """Independent recomputation of feasibility and optimality evidence."""

    max_residual: float
    objective: float
    objective_error: float
    min_value: float
    min_reduced_cost: float | None
    duality_gap: float | None
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def _row_residuals(A: sp.csr_matrix, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``|A x - b|`` per row with compensated (fsum) accumulation."""
    A = sp.csr_matrix(A)
    out = np.empty(A.shape[0])
    for r in range(A.shape[0]):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        terms = (A.data[lo:hi] * x[A.indices[lo:hi]]).tolist()
        terms.append(-float(b[r]))
        out[r] = abs(math.fsum(terms))
    return out


def _basis_duals(A: sp.csr_matrix, c: np.ndarray, sol) -> np.ndarray | None:
    m, ncols = A.shape
    basis = getattr(sol, "basis", None)
    if not basis:
        return None
    if getattr(sol, "form", "primal") == "dual":
        rows = list(sol.basis_rows or [])
        if len(rows) != len(basis):
            return None
        B = A[rows][:, basis].tocsc()
        y = np.zeros(m)
        y[rows] = spla.spsolve(B.T.tocsc(), c[basis])
        return y
    full = sp.hstack([A, sp.identity(m, format="csr")], format="csc")
    cost = np.concatenate([c, np.zeros(m)])
    B = full[:, basis]
    return spla.spsolve(B.T.tocsc(), cost[basis])


def verify_solution(model, sol, tol_feas: float = 1e-7, tol_opt: float = 1e-7) -> VerificationReport:
    """Audit a solution against ``A x = b, x >= 0`` and its basis certificate.

    ``sol`` may be an :class:`LpSolution` or a bare vector; without a basis the
    reduced-cost fields are ``None`` (not applicable).
    """
    A = sp.csr_matrix(model.A, dtype=float)
    b = np.asarray(model.b, dtype=float)
    c = np.asarray(model.c, dtype=float)
    x = np.asarray(getattr(sol, "x", sol), dtype=float)
    failures = []
    if x.shape != (A.shape[1],):
        raise ValueError(f"solution has {x.size} entries, model has {A.shape[1]} columns")
    max_res = float(_row_residuals(A, b, x).max(initial=0.0))
    if max_res > tol_feas:
        failures.append(f"row residual {max_res:.3e} exceeds {tol_feas:g}")
    min_value = float(x.min(initial=0.0))
    if min_value < -tol_feas:
        failures.append(f"negative value {min_value:.3e}")
    objective = math.fsum((c * x).tolist())
    reported = getattr(sol, "objective", objective)
    obj_err = abs(objective - reported) / max(1.0, abs(objective))
    if obj_err > 1e-9:
        failures.append(f"objective mismatch {obj_err:.3e}")

    min_rc = gap = None
    y = _basis_duals(A, c, sol)
    if y is not None:
        d = c - A.T @ y
        min_rc = float(d.min(initial=0.0))
        if min_rc < -tol_opt * max(1.0, float(np.abs(c).max(initial=0.0))):
            failures.append(f"negative reduced cost {min_rc:.3e}")
        gap = objective - math.fsum((b * y).tolist())
        if abs(gap) > 1e-6 * max(1.0, abs(objective)):
            failures.append(f"duality gap {gap:.3e}")
    return VerificationReport(max_res, objective, obj_err, min_value, min_rc, gap, failures)


@dataclass
class CrossCheck:
    internal_objective: float
    external_objective: float
    relative_difference: float
    agree: bool
    status: str


def external_cross_check(mps_path, external_objective: float | None, tol: float = 1e-6,
                         options: SolverOptions | None = None) -> CrossCheck:
    """Solve an exported MPS file internally and compare with an outside value."""
    from .mps import read_mps

    if external_objective is None or not math.isfinite(external_objective):
        raise ValueError("an external objective value is required")
    data = read_mps(mps_path)
    sol = solve(data, options)
    rel = abs(sol.objective - external_objective) / max(1.0, abs(sol.objective), abs(external_objective))
    return CrossCheck(sol.objective, float(external_objective), rel, sol.optimal and rel <= tol, sol.status)


def highs_objective(mps_path) -> float:
    """Optimal value of an exported model according to HiGHS (through SciPy)."""
    from scipy.optimize import linprog

    from .mps import read_mps

    data = read_mps(mps_path)
    res = linprog(data.c, A_eq=data.A, b_eq=data.b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise SolverError(f"HiGHS did not reach optimality: {res.message}")
    return float(res.fun)
