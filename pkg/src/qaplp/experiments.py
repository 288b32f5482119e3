"""Experiment pipeline behind the command line: instances, records, tables.

A run goes instance -> model -> LP solve -> audit and is summarized by one
:class:`ExperimentRecord`.  Records are stored one JSON object per line with
a fixed key order, so files diff cleanly and replay is a matter of feeding
the stored seed and settings back in.
"""

from __future__ import annotations

import itertools
import json
import logging
import statistics
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import indexer
from .analysis import CLASSIFICATIONS, DECOMPOSITION_FAILED, GAP_FOUND, ClaimAudit, audit
from .instance import (
    QapInstance,
    brute_force_optimum,
    generate_random,
    make_uniform,
    read_instance,
)
from .model import SparseModel, build_model
from .simplex import LpSolution, SolverOptions, solve

log = logging.getLogger(__name__)

DEFAULT_ORACLE_LIMIT = 8
DEFAULT_MEMORY_LIMIT_MB = 4096
SOURCES = ("random", "uniform", "file")
MODES = ("no-opcost", "with-opcost")


class MemoryGuardError(RuntimeError):
    """Raised instead of building a model that would not fit."""

    def __init__(self, estimate: int, limit: int):
        self.estimate = estimate
        self.limit = limit
        super().__init__(
            f"estimated peak {estimate / 2**20:.1f} MiB exceeds the limit of {limit / 2**20:.1f} MiB"
        )


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 4
    source: str = "random"
    mode: str = "no-opcost"
    seed: int = 1
    path: str | None = None
    symmetric: bool = False
    valid_cuts: bool = True
    oracle_limit: int = DEFAULT_ORACLE_LIMIT
    repetitions: int = 1
    memory_limit_mb: int = DEFAULT_MEMORY_LIMIT_MB
    records: str | None = None
    solution: str | None = None
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(form="dual"))

    def __post_init__(self) -> None:
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.source == "file" and not self.path:
            raise ValueError("a file source needs a path")
        if self.source != "file" and self.n < 2:
            raise ValueError("n must be at least 2")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")


@dataclass
class ExperimentRecord:
    name: str
    n: int
    mode: str
    seed: int | None
    form: str
    valid_cuts: bool
    status: str
    pbm_count: int
    iterations: int
    seconds: float
    lp_value: float
    oracle_value: float | None
    gap: float | None
    integral: bool
    decomposition: str
    classification: str
    rng: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentRecord":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    @property
    def uniform(self) -> bool:
        return self.name.endswith("x")

    def replay_command(self) -> str:
        if self.uniform:
            src = f"--uniform --n {self.n}"
        else:
            src = f"--n {self.n} --mode {self.mode} --seed {self.seed}"
        cuts = "" if self.valid_cuts else " --no-cuts"
        return f"qaplp solve {src} --form {self.form}{cuts}"


def instance_name(n: int, mode: str = "no-opcost", seed: int | None = None, uniform: bool = False) -> str:
    if uniform:
        return f"QAPn{n}x"
    return f"QAP{'n' if mode == 'no-opcost' else 'o'}{n}{seed}"


def make_instance(config: ExperimentConfig) -> QapInstance:
    if config.source == "file":
        return read_instance(config.path)
    if config.source == "uniform":
        return make_uniform(config.n)
    inst = generate_random(config.n, config.mode, config.seed, symmetric=config.symmetric)
    return QapInstance(inst.traffic, inst.distance, inst.opcost,
                       name=instance_name(config.n, config.mode, config.seed), meta=inst.meta)


# bytes per unit, fitted to tracemalloc peaks of build + solver set-up at n = 4..6
_BYTES_PER_NONZERO = 32
_BYTES_PER_COLUMN = 400
_BYTES_PER_ROW = 400
_BYTES_FIXED = 16 * 1024


def estimate_nonzeros(n: int, valid_cuts: bool = True) -> int:
    """Constraint matrix nonzeros, counted column family by column family.

    A column's row memberships depend only on its stages, and the number of
    columns sharing a stage tuple is a falling factorial, so no assembly is
    needed.  Coefficients that cancel inside a row are not discounted.
    """
    last = n - 1
    cuts = int(valid_cuts)
    total = 0
    for r in range(1, n):
        per = (n - 1 if r == 1 else 2) + (r + 1 <= last) + cuts * (last - 1)
        total += n * (n - 1) * per
    for r, s in itertools.combinations(range(1, n), 2):
        distinct = indexer.positions(r, s)
        per = (2 + n - distinct if r == 1 else 0) + (s <= n - 2) + (s - 1 >= r + 1)
        per += (last - s) + (r - 1) + (s - r - 1) + 2 * cuts
        total += indexer.falling(n, distinct) * per
    for p, r, s in itertools.combinations(range(1, n), 3):
        per = 3 + (2 - (r == p + 1) if p == 1 else 0)
        per += cuts * ((s - r - 1) + 2 * (last - s) + 2 * (p - 1) + (r - p - 1))
        total += indexer.falling(n, indexer.positions(p, r, s)) * per
    return total


def estimate_memory(n: int, valid_cuts: bool = True) -> int:
    """Peak bytes for building the size-``n`` model and setting up its solve.

    Covers allocations visible to ``tracemalloc``; the LU factors grow
    during the solve inside SuperLU and are not included.
    """
    cols = indexer.variable_counts(n)["total"]
    rows = sum(indexer.count_rows(n, valid_cuts).values())
    nnz = estimate_nonzeros(n, valid_cuts)
    return _BYTES_PER_NONZERO * nnz + _BYTES_PER_COLUMN * cols + _BYTES_PER_ROW * rows + _BYTES_FIXED


def check_memory(n: int, valid_cuts: bool, limit_mb: int) -> int:
    estimate = estimate_memory(n, valid_cuts)
    limit = int(limit_mb) * 2**20
    if estimate > limit:
        raise MemoryGuardError(estimate, limit)
    return estimate


@dataclass
class RunResult:
    instance: QapInstance
    model: SparseModel
    solution: LpSolution
    audit: ClaimAudit
    record: ExperimentRecord


def run_experiment(config: ExperimentConfig, inst: QapInstance | None = None) -> RunResult:
    inst = inst if inst is not None else make_instance(config)
    check_memory(inst.n, config.valid_cuts, config.memory_limit_mb)
    model = build_model(inst, valid_cuts=config.valid_cuts)
    if inst.n >= 6:
        log.warning("n=%d: full internal solve is long-running", inst.n)
    sol = solve(model, config.solver)
    oracle = brute_force_optimum(inst, limit=config.oracle_limit) if inst.n <= config.oracle_limit else None
    report = audit(inst, model, sol, oracle)
    mode = inst.meta.get("mode", "uniform" if inst.meta.get("uniform") else "file")
    record = ExperimentRecord(
        name=inst.name or model.name,
        n=inst.n,
        mode=mode,
        seed=inst.meta.get("seed"),
        form=sol.form,
        valid_cuts=config.valid_cuts,
        status=sol.status,
        pbm_count=report.pbm_count,
        iterations=sol.iterations,
        seconds=round(sol.wall_time, 3),
        lp_value=sol.objective,
        oracle_value=report.oracle_value,
        gap=report.gap,
        integral=report.integral,
        decomposition=report.decomposition.verdict,
        classification=report.classification,
        rng=inst.meta.get("rng"),
    )
    return RunResult(inst, model, sol, report, record)


def write_records(records: Iterable[ExperimentRecord], path: str | Path, append: bool = True) -> None:
    with open(path, "a" if append else "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_records(path: str | Path) -> list[ExperimentRecord]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(ExperimentRecord.from_dict(json.loads(line)))
    return out


def solution_to_dict(model: SparseModel, sol: LpSolution, tol: float = 1e-12) -> dict:
    names = model.col_names
    nz = np.flatnonzero(np.abs(sol.x) > tol)
    return {
        "name": model.name,
        "status": sol.status,
        "form": sol.form,
        "objective": sol.objective,
        "iterations": sol.iterations,
        "x": {names[j]: float(sol.x[j]) for j in nz},
    }


def solution_vector(model: SparseModel, data: dict) -> np.ndarray:
    x = np.zeros(model.A.shape[1])
    space = model.space
    for name, value in data["x"].items():
        col = space.parse_name(name)
        if col is None:
            raise ValueError(f"unknown column {name!r}")
        x[col] = value
    return x


# ---------------------------------------------------------------- tables

TABLE_COLUMNS = (
    ("Problem", 10, "s"), ("PBMs", 5, "d"), ("Iterations", 10, "d"), ("Seconds", 9, ".2f"),
    ("Value", 12, ".2f"), ("Oracle", 12, ".2f"), ("Gap", 9, ".2f"), ("Class", 21, "s"),
)


def _group_key(rec: ExperimentRecord) -> tuple[int, str]:
    prefix = rec.name[3] if rec.name.startswith("QAP") and len(rec.name) > 3 else "?"
    return rec.n, prefix


def _mean(values: Sequence[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return statistics.fmean(vals) if vals else None


def _table_rows(records: Sequence[ExperimentRecord]) -> list[list]:
    groups: dict[tuple[int, str], list[ExperimentRecord]] = {}
    for rec in records:
        groups.setdefault(_group_key(rec), []).append(rec)
    rows: list[list] = []
    for key in sorted(groups):
        members = groups[key]
        for rec in members:
            rows.append([rec.name, rec.pbm_count, rec.iterations, rec.seconds, rec.lp_value,
                         rec.oracle_value, rec.gap, rec.classification])
        averaged = [r for r in members if not r.uniform]
        if averaged:
            rows.append([
                "Average", _mean([r.pbm_count for r in averaged]), _mean([r.iterations for r in averaged]),
                _mean([r.seconds for r in averaged]), _mean([r.lp_value for r in averaged]),
                _mean([r.oracle_value for r in averaged]), _mean([r.gap for r in averaged]), "",
            ])
    return rows


def _cell(value, fmt: str) -> str:
    if value is None or value == "":
        return "-" if value is None else ""
    if fmt == "d" and isinstance(value, float) and not value.is_integer():
        return f"{value:.1f}"
    if fmt == "d":
        return str(int(value))
    return format(value, fmt)


def format_table(records: Sequence[ExperimentRecord]) -> str:
    """Fixed-width summary table; uniform instances are left out of averages."""
    if not records:
        raise ValueError("no records to tabulate")
    header = " ".join(f"{name:>{width}}" if fmt != "s" else f"{name:<{width}}"
                      for name, width, fmt in TABLE_COLUMNS)
    lines = [header.rstrip(), "-" * len(header)]
    for row in _table_rows(records):
        cells = []
        for value, (_, width, fmt) in zip(row, TABLE_COLUMNS):
            text = _cell(value, fmt)
            cells.append(f"{text:<{width}}" if fmt == "s" else f"{text:>{width}}")
        lines.append(" ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def format_csv(records: Sequence[ExperimentRecord]) -> str:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([name for name, _, _ in TABLE_COLUMNS])
    for row in _table_rows(records):
        writer.writerow([_cell(v, fmt) if v is not None else "" for v, (_, _, fmt) in zip(row, TABLE_COLUMNS)])
    return buf.getvalue()


# ---------------------------------------------------------------- sweeps

@dataclass
class SweepSummary:
    records: list[ExperimentRecord]
    tally: dict[str, int]
    candidates: list[ExperimentRecord]

    def to_dict(self) -> dict:
        return {
            "runs": len(self.records),
            "tally": self.tally,
            "candidates": [
                {"name": r.name, "seed": r.seed, "classification": r.classification,
                 "gap": r.gap, "replay": r.replay_command()}
                for r in self.candidates
            ],
        }


def run_sweep(config: ExperimentConfig, seeds: Sequence[int]) -> SweepSummary:
    """Solve and audit one random instance per seed."""
    if config.n > config.oracle_limit:
        raise ValueError(f"n={config.n} is above the oracle limit {config.oracle_limit}; gaps cannot be computed")
    records = []
    for seed in seeds:
        cfg = ExperimentConfig(**{**_config_dict(config), "source": "random", "seed": seed})
        records.append(run_experiment(cfg).record)
    tally = {c: 0 for c in CLASSIFICATIONS}
    tally.update(Counter(r.classification for r in records))
    candidates = [r for r in records if r.classification in (GAP_FOUND, DECOMPOSITION_FAILED)]
    return SweepSummary(records, tally, candidates)


def _config_dict(config: ExperimentConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in fields(config)}


def parse_seeds(text: str) -> list[int]:
    """``"1..5"`` or ``"1,4,9"`` or a mix such as ``"1..3,7"``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = (int(p) for p in part.split(".."))
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


def growth_rows(ns: Sequence[int], valid_cuts: bool) -> tuple[list[dict], dict]:
    report = indexer.growth_report(ns, valid_cuts)
    return report["table"], report.get("exponents", {})


__all__ = [
    "ExperimentConfig", "ExperimentRecord", "MemoryGuardError", "RunResult", "SweepSummary",
    "estimate_memory", "estimate_nonzeros", "check_memory", "format_csv", "format_table",
    "instance_name", "make_instance", "parse_seeds", "read_records", "run_experiment",
    "run_sweep", "solution_to_dict", "solution_vector", "write_records", "growth_rows",
]
