"""Binary MOEAs over architecture genomes: NSGA-II with non-geometric crossover, and EAGD.

EAGD here is a Tchebycheff decomposition MOEA with a bounded external
archive of non-dominated solutions; every ``learning_generations``
generations each subproblem adopts the archive member that best solves it.

An evaluator is any callable ``genome -> sequence of objectives`` exposing
``objective_count``; ``n_bits`` is optional (default 86).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .architecture import DEFAULT_LAYOUT, genome_to_hex
from .errors import RunFailure, ShapeError
from .moea_core import (ZERO_WEIGHT, ApproxParetoSet, crowding_distance, das_dennis_weights,
                        hypervolume, nondominated_sort)

NSGA2, EAGD = "NSGA2", "EAGD"
# fixed reference for the run-log HV proxy; covers complexity up to 4/3
PROXY_REFERENCE = 1.5


@dataclass(frozen=True)
class MoeaConfig:
    """Search parameters.  ``None`` probabilities resolve to 1/n bits; a ``None``
    crossover rate resolves to 0.9 (NSGA-II) or 1.0 (EAGD)."""

    population_size: int = 50
    iterations: int = 300
    crossover_rate: float | None = None
    nongeometric_probability: float = 0.8
    bitflip_probability: float | None = None
    mutation_rate: float | None = None
    learning_generations: int = 8
    neighborhood_fraction: float = 0.10
    archive_factor: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2 or self.iterations < 0:
            raise ValueError("population_size >= 2 and iterations >= 0 required")
        if self.learning_generations < 1 or self.archive_factor < 1:
            raise ValueError("learning_generations and archive_factor must be >= 1")
        for name in ("crossover_rate", "nongeometric_probability", "bitflip_probability",
                     "mutation_rate", "neighborhood_fraction"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def resolved(self, moea: str, n_bits: int) -> "MoeaConfig":
        cx = self.crossover_rate
        if cx is None:
            cx = 1.0 if moea == EAGD else 0.9
        return replace(
            self,
            crossover_rate=cx,
            bitflip_probability=1.0 / n_bits if self.bitflip_probability is None else self.bitflip_probability,
            mutation_rate=1.0 / n_bits if self.mutation_rate is None else self.mutation_rate,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def budget(self) -> int:
        return self.population_size * (self.iterations + 1)


class OnesZerosProblem:
    """Toy bi-objective problem: minimise (ones/n, zeros/n).  Every genome is optimal."""

    objective_count = 2

    def __init__(self, n_bits: int = DEFAULT_LAYOUT.n_bits):
        self.n_bits = n_bits
        self.calls = 0

    def __call__(self, genome):
        self.calls += 1
        ones = int(np.sum(genome))
        return (ones / self.n_bits, (self.n_bits - ones) / self.n_bits)


def _check_pair(p1, p2):
    if len(p1) != len(p2):
        raise ShapeError(f"parents differ in length: {len(p1)} vs {len(p2)}")


def uniform_crossover(p1, p2, rng: np.random.Generator):
    _check_pair(p1, p2)
    swap = rng.random(len(p1)) < 0.5
    return np.where(swap, p2, p1).astype(np.uint8), np.where(swap, p1, p2).astype(np.uint8)


def nongeometric_crossover(p1, p2, bitflip_probability: float, rng: np.random.Generator):
    """Uniform crossover on disagreeing bits; agreeing bits flip independently per child."""
    _check_pair(p1, p2)
    p1 = np.asarray(p1, dtype=np.uint8)
    p2 = np.asarray(p2, dtype=np.uint8)
    c1, c2 = uniform_crossover(p1, p2, rng)
    agree = p1 == p2
    for child in (c1, c2):
        flip = agree & (rng.random(len(p1)) < bitflip_probability)
        child[flip] = 1 - child[flip]
    return c1, c2


def _random_bits(rng, n_bits: int) -> np.ndarray:
    return rng.integers(0, 2, size=n_bits, dtype=np.uint8)


def _mutate(genome, rate, rng):
    flips = rng.random(len(genome)) < rate
    out = genome.copy()
    out[flips] = 1 - out[flips]
    return out


class _Counter:
    """Evaluator wrapper that counts calls and converts failures into RunFailure."""

    def __init__(self, evaluator):
        self.evaluator = evaluator
        self.m = int(evaluator.objective_count)
        self.calls = 0

    def __call__(self, genome) -> np.ndarray:
        self.calls += 1
        try:
            f = np.asarray(self.evaluator(genome), dtype=float)
        except Exception as exc:
            raise RunFailure(f"evaluation of genome {genome_to_hex(genome)} failed: {exc}") from exc
        if f.shape != (self.m,) or not np.all(np.isfinite(f)):
            raise RunFailure(f"genome {genome_to_hex(genome)} produced invalid objectives {f.tolist()}")
        return f


def _log_row(gen: int, calls: int, F: np.ndarray, front: np.ndarray) -> dict:
    row = {"generation": gen, "evaluations": calls}
    for k in range(F.shape[1]):
        row[f"best_f{k}"] = float(F[:, k].min())
        row[f"mean_f{k}"] = float(F[:, k].mean())
    row["hv_proxy"] = hypervolume(front, np.full(F.shape[1], PROXY_REFERENCE))
    return row


def _rank_crowd(F: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[list[int]]]:
    fronts = nondominated_sort(F)
    rank = np.empty(len(F), dtype=int)
    crowd = np.empty(len(F))
    for r, idx in enumerate(fronts):
        rank[idx] = r
        crowd[idx] = crowding_distance(F[idx])
    return rank, crowd, fronts


def _tournament(rank, crowd, rng) -> int:
    i, j = (int(v) for v in rng.integers(0, len(rank), size=2))
    if rank[i] != rank[j]:
        return i if rank[i] < rank[j] else j
    if crowd[i] != crowd[j]:
        return i if crowd[i] > crowd[j] else j
    return min(i, j)


def _environmental_selection(F: np.ndarray, n: int) -> np.ndarray:
    chosen: list[int] = []
    for idx in nondominated_sort(F):
        if len(chosen) + len(idx) <= n:
            chosen.extend(idx)
            continue
        cd = crowding_distance(F[idx])
        order = sorted(range(len(idx)), key=lambda t: (-cd[t], idx[t]))
        chosen.extend(idx[t] for t in order[: n - len(chosen)])
        break
    return np.array(chosen)


def nsga2_run(cfg: MoeaConfig, evaluator, log: list | None = None, **meta) -> ApproxParetoSet:
    """Elitist generational NSGA-II; returns the final population's first front."""
    n_bits = getattr(evaluator, "n_bits", DEFAULT_LAYOUT.n_bits)
    cfg = cfg.resolved(NSGA2, n_bits)
    rng = np.random.default_rng(cfg.seed)
    ev = _Counter(evaluator)
    N = cfg.population_size
    pop = [_random_bits(rng, n_bits) for _ in range(N)]
    F = np.array([ev(g) for g in pop])
    rank, crowd, fronts = _rank_crowd(F)
    if log is not None:
        log.append(_log_row(0, ev.calls, F, F[fronts[0]]))
    for gen in range(1, cfg.iterations + 1):
        offspring = []
        while len(offspring) < N:
            p1 = pop[_tournament(rank, crowd, rng)]
            p2 = pop[_tournament(rank, crowd, rng)]
            if rng.random() < cfg.crossover_rate:
                if rng.random() < cfg.nongeometric_probability:
                    c1, c2 = nongeometric_crossover(p1, p2, cfg.bitflip_probability, rng)
                else:
                    c1, c2 = uniform_crossover(p1, p2, rng)
            else:
                c1, c2 = p1.copy(), p2.copy()
            offspring.append(_mutate(c1, cfg.mutation_rate, rng))
            if len(offspring) < N:
                offspring.append(_mutate(c2, cfg.mutation_rate, rng))
        Fo = np.array([ev(g) for g in offspring])
        merged = pop + offspring
        Fm = np.vstack([F, Fo])
        keep = _environmental_selection(Fm, N)
        pop = [merged[i] for i in keep]
        F = Fm[keep]
        rank, crowd, fronts = _rank_crowd(F)
        if log is not None:
            log.append(_log_row(gen, ev.calls, F, F[fronts[0]]))
    first = fronts[0]
    return ApproxParetoSet.from_population([pop[i] for i in first], F[first], seed=cfg.seed, **meta)


def subproblem_weights(m: int, n: int) -> np.ndarray:
    """``n`` Das-Dennis vectors; when no lattice has exactly ``n`` points the
    smallest larger lattice is thinned by greedy farthest-point selection
    seeded with the corner vectors."""
    H = 1
    while math.comb(H + m - 1, m - 1) < n:
        H += 1
    W = das_dennis_weights(m, H)
    if len(W) == n:
        return W
    corners = [int(np.flatnonzero(np.isclose(W[:, k], 1.0))[0]) for k in range(m)]
    chosen = corners[:n]
    dmin = np.min(np.linalg.norm(W[:, None, :] - W[chosen][None, :, :], axis=2), axis=1)
    while len(chosen) < n:
        nxt = int(np.argmax(dmin))
        chosen.append(nxt)
        dmin = np.minimum(dmin, np.linalg.norm(W - W[nxt], axis=1))
    return W[sorted(chosen)]


def _tcheby_rows(F: np.ndarray, W: np.ndarray, ideal: np.ndarray) -> np.ndarray:
    # row-wise tchebycheff(F[r], W[r], ideal) with the same zero-weight guard
    return np.max(np.where(W == 0, ZERO_WEIGHT, W) * np.abs(F - ideal), axis=-1)


class Archive:
    """Bounded set of mutually non-dominated (genome, objectives) pairs."""

    def __init__(self, capacity: int, m: int):
        self.capacity = capacity
        self.genomes: list[np.ndarray] = []
        self.F = np.zeros((0, m))
        self._keys: list[bytes] = []

    def __len__(self) -> int:
        return len(self.genomes)

    def add(self, genome, f) -> bool:
        key = genome.tobytes()
        if key in self._keys:
            return False
        F = self.F
        if np.any(np.all(F <= f, axis=1) & np.any(F < f, axis=1)):
            return False
        keep = ~(np.all(f <= F, axis=1) & np.any(f < F, axis=1))
        idx = np.flatnonzero(keep)
        self.genomes = [self.genomes[i] for i in idx] + [genome.copy()]
        self._keys = [self._keys[i] for i in idx] + [key]
        self.F = np.vstack([F[keep], f])
        while len(self.genomes) > self.capacity:
            drop = int(np.argmin(crowding_distance(self.F)))
            del self.genomes[drop], self._keys[drop]
            self.F = np.delete(self.F, drop, axis=0)
        return True


def eagd_run(cfg: MoeaConfig, evaluator, log: list | None = None, **meta) -> ApproxParetoSet:
    """Decomposition MOEA guided by an external non-dominated archive."""
    n_bits = getattr(evaluator, "n_bits", DEFAULT_LAYOUT.n_bits)
    cfg = cfg.resolved(EAGD, n_bits)
    rng = np.random.default_rng(cfg.seed)
    ev = _Counter(evaluator)
    N = cfg.population_size
    W = subproblem_weights(ev.m, N)
    T = max(2, math.ceil(cfg.neighborhood_fraction * N))
    dist = np.linalg.norm(W[:, None, :] - W[None, :, :], axis=2)
    B = np.argsort(dist, axis=1, kind="stable")[:, :T]

    pop = [_random_bits(rng, n_bits) for _ in range(N)]
    F = np.array([ev(g) for g in pop])
    ideal = F.min(axis=0)
    archive = Archive(cfg.archive_factor * N, ev.m)
    for g, f in zip(pop, F):
        archive.add(g, f)
    if log is not None:
        log.append(_log_row(0, ev.calls, F, archive.F))
    for gen in range(1, cfg.iterations + 1):
        for i in range(N):
            a, b = rng.choice(B[i], size=2, replace=False)
            if rng.random() < cfg.crossover_rate:
                child = uniform_crossover(pop[a], pop[b], rng)[0]
            else:
                child = pop[a].copy()
            child = _mutate(child, cfg.mutation_rate, rng)
            fc = ev(child)
            ideal = np.minimum(ideal, fc)
            nb = B[i]
            better = _tcheby_rows(fc, W[nb], ideal) < _tcheby_rows(F[nb], W[nb], ideal)
            for j in nb[better]:
                pop[j] = child.copy()
                F[j] = fc
            archive.add(child, fc)
        if gen % cfg.learning_generations == 0:
            AF = archive.F
            current = _tcheby_rows(F, W, ideal)
            for i in range(N):
                scores = _tcheby_rows(AF, W[i], ideal)
                best = int(np.argmin(scores))
                if scores[best] < current[i]:
                    pop[i] = archive.genomes[best].copy()
                    F[i] = AF[best]
        if log is not None:
            log.append(_log_row(gen, ev.calls, F, archive.F))
    return ApproxParetoSet.from_population(archive.genomes, archive.F, seed=cfg.seed, **meta)


def run_moea(moea: str, cfg: MoeaConfig, evaluator, log: list | None = None, **meta) -> ApproxParetoSet:
    if moea == NSGA2:
        return nsga2_run(cfg, evaluator, log, **meta)
    if moea == EAGD:
        return eagd_run(cfg, evaluator, log, **meta)
    raise ValueError(f"unknown MOEA {moea!r}")
