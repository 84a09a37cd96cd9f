"""Multi-objective primitives: dominance, sorting, crowding, decomposition and hypervolume.

All objectives are minimised.  Point sets are ``(n, m)`` float arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .architecture import DEFAULT_LAYOUT, DecodedArchitecture, decode, genome_from_hex, genome_to_hex
from .errors import FormatError, ShapeError

ZERO_WEIGHT = 1e-6
REFERENCE_MARGIN = 0.1


def dominates(a, b) -> bool:
    """Pareto dominance for minimisation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"objective vectors differ in length: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def _points(points) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.ndim == 1 and P.size == 0:
        return P.reshape(0, 0)
    if P.ndim != 2:
        raise ShapeError(f"expected an (n, m) point array, got shape {P.shape}")
    return P


def _dominance_matrix(P: np.ndarray) -> np.ndarray:
    # D[i, j] is True when point i dominates point j
    le = np.all(P[:, None, :] <= P[None, :, :], axis=2)
    lt = np.any(P[:, None, :] < P[None, :, :], axis=2)
    return le & lt


def nondominated_sort(points) -> list[list[int]]:
    """Fast non-dominated sort; returns fronts as ascending index lists."""
    P = _points(points)
    n = len(P)
    if n == 0:
        return []
    D = _dominance_matrix(P)
    counts = D.sum(axis=0)
    fronts = []
    current = np.flatnonzero(counts == 0)
    while current.size:
        fronts.append(current.tolist())
        counts = counts - D[current].sum(axis=0)
        counts[current] = -1
        current = np.flatnonzero(counts == 0)
    return fronts


def nondominated_mask(points) -> np.ndarray:
    P = _points(points)
    if len(P) == 0:
        return np.zeros(0, dtype=bool)
    return ~_dominance_matrix(P).any(axis=0)


def crowding_distance(points) -> np.ndarray:
    """Sum over objectives of normalised neighbour gaps; extremes get +inf."""
    P = _points(points)
    n, m = P.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = math.inf
        return dist
    for k in range(m):
        order = np.argsort(P[:, k], kind="stable")
        col = P[order, k]
        dist[order[0]] = dist[order[-1]] = math.inf
        span = col[-1] - col[0]
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def das_dennis_weights(m: int, H: int) -> np.ndarray:
    """Simplex-lattice weights with step ``1/H``; ``C(H+m-1, m-1)`` rows.

    Rows are ordered so the first component rises slowest, e.g. for two
    objectives ``(0, 1), (0.25, 0.75), ...``.
    """
    if m < 2 or H < 1:
        raise ValueError("need m >= 2 and H >= 1")
    rows = []
    # stars and bars: choose m-1 divider positions among H+m-1 slots
    for bars in combinations(range(H + m - 1), m - 1):
        edges = (-1, *bars, H + m - 1)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(m)])
    W = np.array(rows, dtype=float) / H
    order = np.lexsort(W.T[::-1])
    return W[order]


def tchebycheff(objs, weight, ideal) -> float:
    f = np.asarray(objs, dtype=float)
    w = np.asarray(weight, dtype=float)
    z = np.asarray(ideal, dtype=float)
    if not f.shape == w.shape == z.shape:
        raise ShapeError("objectives, weight and ideal differ in length")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    return float(np.max(np.where(w == 0, ZERO_WEIGHT, w) * np.abs(f - z)))


def _hv2(P: np.ndarray, ref: np.ndarray) -> float:
    # P already filtered to points strictly below ref
    order = np.lexsort((P[:, 1], P[:, 0]))
    area = 0.0
    y_best = ref[1]
    for x, y in P[order]:
        if y < y_best:
            area += (ref[0] - x) * (y_best - y)
            y_best = y
    return area


def _hv3(P: np.ndarray, ref: np.ndarray) -> float:
    order = np.argsort(P[:, 2], kind="stable")
    P = P[order]
    levels = np.append(P[:, 2], ref[2])
    vol = 0.0
    for i in range(len(P)):
        depth = levels[i + 1] - levels[i]
        if depth > 0:
            vol += _hv2(P[: i + 1, :2], ref[:2]) * depth
    return vol


def hypervolume(front, ref) -> float:
    """Exact dominated volume below ``ref`` for two or three objectives."""
    ref = np.asarray(ref, dtype=float)
    P = _points(front)
    if P.size == 0:
        return 0.0
    if P.shape[1] != len(ref):
        raise ShapeError("front and reference point differ in dimension")
    P = np.unique(P[np.all(P < ref, axis=1)], axis=0)
    if len(P) == 0:
        return 0.0
    if len(ref) == 2:
        return _hv2(P, ref)
    if len(ref) == 3:
        return _hv3(P, ref)
    raise ShapeError("hypervolume supports two or three objectives")


@dataclass
class ApsMember:
    genome: np.ndarray
    objectives: tuple[float, ...]
    architecture: DecodedArchitecture | None = None

    def __post_init__(self):
        self.genome = np.asarray(self.genome, dtype=np.uint8)
        self.objectives = tuple(float(v) for v in self.objectives)
        if self.architecture is None and len(self.genome) == DEFAULT_LAYOUT.n_bits:
            self.architecture = decode(self.genome)


@dataclass
class ApproxParetoSet:
    """Final non-dominated members of one search run."""

    members: list[ApsMember] = field(default_factory=list)
    scenario_id: str = ""
    run_id: int = 0
    seed: int = 0
    complexity_mode: str = "literal"

    def __len__(self) -> int:
        return len(self.members)

    def objectives(self) -> np.ndarray:
        if not self.members:
            return np.zeros((0, 0))
        return np.array([m.objectives for m in self.members])

    def check(self) -> None:
        """Raise ValueError unless members are distinct and mutually non-dominated."""
        hexes = [genome_to_hex(m.genome) for m in self.members]
        if len(set(hexes)) != len(hexes):
            raise ValueError("duplicate genomes in approximate Pareto set")
        if self.members and not nondominated_mask(self.objectives()).all():
            raise ValueError("approximate Pareto set contains dominated members")

    def records(self) -> list[dict]:
        return [
            {
                "scenario": self.scenario_id,
                "run": self.run_id,
                "seed": self.seed,
                "genome_hex": genome_to_hex(m.genome),
                "objectives": list(m.objectives),
                "complexity_mode": self.complexity_mode,
            }
            for m in self.members
        ]

    @classmethod
    def from_population(cls, genomes: Sequence[np.ndarray], objectives, **meta) -> "ApproxParetoSet":
        """First front of a population, one member per distinct genome."""
        F = _points(objectives)
        seen = set()
        members = []
        for i in sorted(np.flatnonzero(nondominated_mask(F))):
            key = genome_to_hex(genomes[i])
            if key not in seen:
                seen.add(key)
                members.append(ApsMember(genomes[i], tuple(F[i])))
        return cls(members, **meta)


def write_aps(path, sets: Iterable[ApproxParetoSet], header: dict | None = None) -> None:
    """Line-delimited JSON; an optional first line ``{"header": {...}}``."""
    with open(path, "w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for aps in sets:
            for rec in aps.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_aps(path, n_bits: int = DEFAULT_LAYOUT.n_bits) -> list[ApproxParetoSet]:
    """Group records back into sets keyed by (scenario, run), in file order."""
    groups: dict[tuple, ApproxParetoSet] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        if "header" in rec:
            continue
        try:
            key = (rec["scenario"], int(rec["run"]))
            aps = groups.get(key)
            if aps is None:
                aps = groups[key] = ApproxParetoSet([], rec["scenario"], int(rec["run"]), int(rec["seed"]),
                                                    rec.get("complexity_mode", "literal"))
            genome = genome_from_hex(rec["genome_hex"], n_bits)
            aps.members.append(ApsMember(genome, tuple(rec["objectives"])))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{path}:{lineno}: malformed APS record ({exc})") from None
    return list(groups.values())


def _as_points(obj) -> np.ndarray:
    if isinstance(obj, ApproxParetoSet):
        return obj.objectives()
    return _points(obj)


def estimate_true_pareto(all_aps: Sequence) -> np.ndarray:
    """Non-dominated, de-duplicated union of every set's objective vectors."""
    if len(all_aps) == 0:
        raise ValueError("need at least one approximate Pareto set")
    parts = [_as_points(a) for a in all_aps]
    parts = [p for p in parts if p.size]
    if not parts:
        raise ValueError("all approximate Pareto sets are empty")
    U = np.unique(np.vstack(parts), axis=0)
    return U[nondominated_mask(U)]


def normalization_bounds(gamma_star) -> tuple[np.ndarray, np.ndarray]:
    G = _points(gamma_star)
    return G.min(axis=0), G.max(axis=0)


def normalize(points, ideal, nadir) -> np.ndarray:
    span = np.asarray(nadir, dtype=float) - np.asarray(ideal, dtype=float)
    span = np.where(span > 0, span, 1.0)
    return (_points(points) - ideal) / span


def hv_indicator(aps, gamma_star, objective_bounds=None, margin: float = REFERENCE_MARGIN) -> float:
    """HV of ``aps`` relative to HV of ``gamma_star`` after normalising by Γ* bounds."""
    G = _as_points(gamma_star)
    if G.size == 0:
        raise ValueError("estimated true Pareto set is empty")
    ideal, nadir = objective_bounds if objective_bounds is not None else normalization_bounds(G)
    ref = np.full(G.shape[1], 1.0 + margin)
    denom = hypervolume(normalize(G, ideal, nadir), ref)
    A = _as_points(aps)
    if A.size == 0:
        return 0.0
    return hypervolume(normalize(A, ideal, nadir), ref) / denom
