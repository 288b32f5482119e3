"""QAP instances, perfect matchings, and the exact enumeration oracle.

Facilities and sites are numbered ``1..n`` in every public function; the
matrices themselves are plain 0-based numpy arrays.  A :class:`Matching`
lists, for each site ``t = 1..n``, the facility placed there.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

RNG_ALGORITHM = "PCG64"
DEFAULT_ENUMERATION_LIMIT = 9

TRAFFIC_RANGE = (10, 250)
DISTANCE_RANGE = (1, 30)
OPCOST_RANGE = (0, 5000)


class InstanceError(ValueError):
    """Raised for malformed instances, matchings or instance files."""


def _as_matrix(name: str, data, n: int) -> np.ndarray:
    arr = np.array(data, dtype=float)
    if arr.shape != (n, n):
        raise InstanceError(f"{name} must be {n}x{n}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InstanceError(f"{name} has non-finite entries")
    if np.any(arr < 0):
        raise InstanceError(f"{name} has negative entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class QapInstance:
    """Facility traffic ``f``, site distances ``d`` and operating costs ``o``.

    ``traffic[i-1, j-1]`` is the volume from facility ``i`` to ``j``,
    ``distance[r-1, s-1]`` the distance from site ``r`` to ``s`` and
    ``opcost[i-1, r-1]`` the cost of running facility ``i`` at site ``r``.
    Diagonals of ``traffic`` and ``distance`` are stored but never read.
    """

    traffic: np.ndarray
    distance: np.ndarray
    opcost: np.ndarray
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        traffic = np.asarray(self.traffic)
        if traffic.ndim != 2 or traffic.shape[0] < 1:
            raise InstanceError("traffic must be a non-empty square matrix")
        n = traffic.shape[0]
        object.__setattr__(self, "traffic", _as_matrix("traffic", self.traffic, n))
        object.__setattr__(self, "distance", _as_matrix("distance", self.distance, n))
        object.__setattr__(self, "opcost", _as_matrix("opcost", self.opcost, n))

    @property
    def n(self) -> int:
        return self.traffic.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QapInstance):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.traffic, other.traffic)
            and np.array_equal(self.distance, other.distance)
            and np.array_equal(self.opcost, other.opcost)
        )

    def _check(self, *indices: int) -> None:
        for idx in indices:
            if not 1 <= idx <= self.n:
                raise InstanceError(f"index {idx} outside 1..{self.n}")


@dataclass(frozen=True)
class Matching:
    """A perfect assignment; ``assign[t-1]`` is the facility at site ``t``."""

    assign: tuple[int, ...]

    def __post_init__(self) -> None:
        assign = tuple(int(a) for a in self.assign)
        if sorted(assign) != list(range(1, len(assign) + 1)):
            raise InstanceError(f"{assign} is not a permutation of 1..{len(assign)}")
        object.__setattr__(self, "assign", assign)

    @property
    def n(self) -> int:
        return len(self.assign)

    def site_of(self, facility: int) -> int:
        return self.assign.index(facility) + 1

    def w_matrix(self) -> np.ndarray:
        """Binary ``w[i-1, r-1] = 1`` iff facility ``i`` sits at site ``r``."""
        w = np.zeros((self.n, self.n), dtype=np.int64)
        for r, i in enumerate(self.assign):
            w[i - 1, r] = 1
        return w

    @classmethod
    def from_w(cls, w: np.ndarray) -> "Matching":
        w = np.asarray(w)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InstanceError("w must be square")
        if not (np.all(w.sum(axis=0) == 1) and np.all(w.sum(axis=1) == 1)):
            raise InstanceError("w is not a permutation matrix")
        return cls(tuple(int(np.argmax(w[:, r])) + 1 for r in range(w.shape[1])))

    def __str__(self) -> str:
        return "(" + " ".join(str(a) for a in self.assign) + ")"

    @classmethod
    def parse(cls, text: str) -> "Matching":
        return cls(tuple(int(tok) for tok in text.strip().strip("()").replace(",", " ").split()))


def all_matchings(n: int) -> Iterator[Matching]:
    """All ``n!`` matchings in lexicographic order of ``assign``."""
    for perm in itertools.permutations(range(1, n + 1)):
        yield Matching(perm)


def handling_cost(inst: QapInstance, i: int, r: int, j: int, s: int) -> float:
    """``f_ij * d_rs + f_ji * d_sr`` for facilities ``i != j`` at sites ``r != s``."""
    inst._check(i, r, j, s)
    if i == j or r == s:
        raise InstanceError("handling cost needs distinct facilities and distinct sites")
    f, d = inst.traffic, inst.distance
    return float(f[i - 1, j - 1] * d[r - 1, s - 1] + f[j - 1, i - 1] * d[s - 1, r - 1])


def evaluate(inst: QapInstance, m: Matching) -> float:
    """QAP objective with one handling term per unordered site pair."""
    if m.n != inst.n:
        raise InstanceError(f"matching has size {m.n}, instance has {inst.n}")
    p = np.asarray(m.assign) - 1
    f = inst.traffic[np.ix_(p, p)]  # f[r, s] = traffic between the facilities at sites r, s
    pair = f * inst.distance
    upper = np.triu(pair + pair.T, k=1)
    return float(upper.sum() + inst.opcost[p, np.arange(inst.n)].sum())


def brute_force_optimum(
    inst: QapInstance, limit: int = DEFAULT_ENUMERATION_LIMIT
) -> tuple[Matching, float]:
    """Exact optimum by enumerating all ``n!`` matchings.

    Ties go to the lexicographically smallest assignment, which falls out of
    enumerating in lexicographic order and keeping strict improvements only.
    """
    if inst.n > limit:
        raise InstanceError(f"n={inst.n} exceeds the enumeration limit {limit}")
    best: Matching | None = None
    best_value = math.inf
    for m in all_matchings(inst.n):
        value = evaluate(inst, m)
        if value < best_value:
            best, best_value = m, value
    assert best is not None
    return best, best_value


def generate_random(
    n: int, mode: str = "no-opcost", seed: int = 0, symmetric: bool = False
) -> QapInstance:
    """Random instance drawn as integers on the experimental ranges.

    Traffic is uniform on ``[10, 250]``, distance on ``[1, 30]`` and, in
    ``with-opcost`` mode, operating cost on ``[0, 5000]``.  Off-diagonal
    entries are drawn independently per ordered pair unless ``symmetric``.
    """
    if n < 2:
        raise InstanceError("random instances need n >= 2")
    if mode not in ("no-opcost", "with-opcost"):
        raise InstanceError(f"unknown mode {mode!r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    traffic = rng.integers(TRAFFIC_RANGE[0], TRAFFIC_RANGE[1] + 1, size=(n, n))
    distance = rng.integers(DISTANCE_RANGE[0], DISTANCE_RANGE[1] + 1, size=(n, n))
    if symmetric:
        distance = np.triu(distance, 1) + np.triu(distance, 1).T
    np.fill_diagonal(traffic, 0)
    np.fill_diagonal(distance, 0)
    if mode == "with-opcost":
        opcost = rng.integers(OPCOST_RANGE[0], OPCOST_RANGE[1] + 1, size=(n, n))
    else:
        opcost = np.zeros((n, n), dtype=np.int64)
    meta = {"seed": seed, "rng": RNG_ALGORITHM, "mode": mode, "symmetric": symmetric}
    return QapInstance(traffic, distance, opcost, meta=meta)


def make_uniform(n: int, f0: float = 50, d0: float = 10) -> QapInstance:
    """Instance with constant off-diagonal traffic and distance, no opcost."""
    if n < 2:
        raise InstanceError("uniform instances need n >= 2")
    if f0 < 0 or d0 < 0:
        raise InstanceError("f0 and d0 must be nonnegative")
    off = 1 - np.eye(n)
    meta = {"uniform": True, "f0": f0, "d0": d0}
    return QapInstance(f0 * off, d0 * off, np.zeros((n, n)), name=f"QAPn{n}x", meta=meta)


def _format_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def format_instance(inst: QapInstance) -> str:
    lines = []
    if inst.name:
        lines.append(f"# name={inst.name}")
    for key, value in inst.meta.items():
        lines.append(f"# {key}={value}")
    lines.append(str(inst.n))
    for mat in (inst.traffic, inst.distance, inst.opcost):
        lines.append("")
        for row in mat:
            lines.append(" ".join(_format_number(x) for x in row))
    return "\n".join(lines) + "\n"


def _parse_meta_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text in ("True", "False"):
        return text == "True"
    return text


def parse_instance(text: str) -> QapInstance:
    """Parse the three-block format, or a two-matrix QAPLIB file (opcost 0).

    Lines starting with ``#`` carry ``key=value`` metadata and are otherwise
    ignored.
    """
    meta: dict = {}
    name = ""
    numbers: list[str] = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("#"):
            key, sep, value = stripped[1:].strip().partition("=")
            if sep:
                if key.strip() == "name":
                    name = value.strip()
                else:
                    meta[key.strip()] = _parse_meta_value(value.strip())
            continue
        numbers.extend(stripped.split())
    if not numbers:
        raise InstanceError("empty instance file")
    try:
        n = int(numbers[0])
        values = [float(tok) for tok in numbers[1:]]
    except ValueError as exc:
        raise InstanceError(f"non-numeric token in instance file: {exc}") from None
    if n < 1:
        raise InstanceError(f"invalid size {n}")
    nn = n * n
    if len(values) == 3 * nn:
        blocks = [values[k * nn:(k + 1) * nn] for k in range(3)]
    elif len(values) == 2 * nn:
        blocks = [values[:nn], values[nn:], [0.0] * nn]
    else:
        raise InstanceError(f"expected {2 * nn} or {3 * nn} numbers after n={n}, got {len(values)}")
    mats = [np.array(b).reshape(n, n) for b in blocks]
    return QapInstance(*mats, name=name, meta=meta)


def read_instance(path: str | Path) -> QapInstance:
    inst = parse_instance(Path(path).read_text())
    if not inst.name:
        object.__setattr__(inst, "name", Path(path).stem)
    return inst


def write_instance(inst: QapInstance, path: str | Path) -> None:
    Path(path).write_text(format_instance(inst))

