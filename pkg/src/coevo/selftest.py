"""Oracle suites behind ``coevo selftest``: each check compares a fast routine with a brute-force one."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .architecture import DecodedArchitecture
from .moea_core import das_dennis_weights, estimate_true_pareto, hypervolume, nondominated_sort
from .neural_model import init_weights, loss_and_gradient
from .stats_report import friedman_statistic, friedman_test, block_ranks, hommel_apv


@dataclass
class OracleResult:
    name: str
    passed: bool
    detail: str


# ---- brute-force oracles -------------------------------------------------

def brute_fronts(P: np.ndarray) -> list[list[int]]:
    """Peel non-dominated layers with an explicit pairwise loop."""
    remaining = list(range(len(P)))
    fronts = []
    while remaining:
        front = [i for i in remaining
                 if not any(np.all(P[j] <= P[i]) and np.any(P[j] < P[i]) for j in remaining if j != i)]
        fronts.append(front)
        remaining = [i for i in remaining if i not in front]
    return fronts


def brute_nondominated(P: np.ndarray) -> np.ndarray:
    keep = [i for i in range(len(P))
            if not any(np.all(P[j] <= P[i]) and np.any(P[j] < P[i]) for j in range(len(P)))]
    return np.unique(P[keep], axis=0)


def dominated_cells(P: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Grid cut at every point coordinate, with a flag per cell saying whether it is dominated."""
    axes = [np.unique(P[:, k]) for k in range(P.shape[1])]
    # cell index i along an axis covers [axes[i-1], axes[i]); index 0 lies below every point
    grid = np.zeros(tuple(len(a) + 1 for a in axes), dtype=bool)
    idx = tuple(np.searchsorted(a, P[:, k], side="right") for k, a in enumerate(axes))
    grid[idx] = True
    for k in range(P.shape[1]):
        grid = np.logical_or.accumulate(grid, axis=k)
    return axes, grid


def monte_carlo_hv(P: np.ndarray, ref: np.ndarray, samples: int, rng) -> tuple[float, float]:
    """Estimate and standard error of the dominated volume inside the box [min(P), ref]."""
    P = P[np.all(P < ref, axis=1)]
    if len(P) == 0:
        return 0.0, 0.0
    lo = P.min(axis=0)
    box = float(np.prod(ref - lo))
    axes, grid = dominated_cells(P)
    hits = 0
    chunk = 250_000
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        U = lo + rng.random((m, len(ref))) * (ref - lo)
        cell = tuple(np.searchsorted(a, U[:, k], side="right") for k, a in enumerate(axes))
        hits += int(grid[cell].sum())
        done += m
    frac = hits / samples
    return box * frac, box * math.sqrt(max(frac * (1 - frac), 1e-300) / samples)


def permutation_pvalue(M: np.ndarray, n_perm: int, rng) -> float:
    """Within-block permutation p-value of the tie-corrected Friedman statistic."""
    q_obs = friedman_statistic(block_ranks(M))
    ranks = block_ranks(M)
    count = 0
    for _ in range(n_perm):
        perm = np.vstack([rng.permutation(row) for row in ranks])
        if friedman_statistic(perm) >= q_obs - 1e-12:
            count += 1
    return count / n_perm


def numeric_gradient(arch, weights, X, y, eps: float = 1e-6):
    flat = []
    for arrays in (weights.weights, weights.biases):
        for a in arrays:
            g = np.zeros_like(a)
            it = np.nditer(a, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = a[idx]
                a[idx] = old + eps
                up = loss_and_gradient(arch, weights, X, y)[0]
                a[idx] = old - eps
                down = loss_and_gradient(arch, weights, X, y)[0]
                a[idx] = old
                g[idx] = (up - down) / (2 * eps)
            flat.append(g.ravel())
    return np.concatenate(flat)


def random_small_architecture(rng) -> DecodedArchitecture:
    n_feat = int(rng.integers(1, 6))
    feats = sorted(rng.choice(68, size=n_feat, replace=False).tolist())
    sizes = [int(rng.integers(0, 6)), int(rng.integers(0, 6))]
    if sizes == [0, 0]:
        sizes[0] = 1
    acts = [str(rng.choice(["tansig", "logsig"])) for _ in range(2)]
    return DecodedArchitecture(tuple(feats), tuple(zip(sizes, acts)))


def gradient_relative_error(arch, rng) -> float:
    weights = init_weights(arch, int(rng.integers(2**31)))
    for b in weights.biases:
        b[:] = rng.normal(0, 0.1, size=b.shape)
    X = rng.normal(size=(12, arch.n_inputs))
    y = np.array([0, 1] * 6, dtype=float)
    _, grad = loss_and_gradient(arch, weights, X, y)
    # same order as numeric_gradient: all weights, then all biases
    analytic = np.concatenate([g.ravel() for g in grad.weights] + [g.ravel() for g in grad.biases])
    numeric = numeric_gradient(arch, weights, X, y)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12))


# ---- suites ----------------------------------------------------------------

def check_hypervolume(rng, n_fronts: int = 40, samples: int = 200_000, perturbation: float = 0.0) -> OracleResult:
    worst = 0.0
    for t in range(n_fronts):
        m = 2 if t % 2 == 0 else 3
        P = rng.random((int(rng.integers(1, 51)), m))
        ref = np.ones(m) * 1.1
        exact = hypervolume(P, ref) * (1.0 + perturbation)
        est, se = monte_carlo_hv(P, ref, samples, rng)
        worst = max(worst, abs(exact - est) / max(se, 1e-12))
    return OracleResult("hypervolume vs Monte-Carlo", bool(worst <= 3.0), f"worst deviation {worst:.2f} SE")


def check_dominance(rng, n_instances: int = 30) -> OracleResult:
    bad = 0
    for _ in range(n_instances):
        m = int(rng.integers(2, 4))
        P = np.round(rng.random((int(rng.integers(1, 80)), m)), 1)
        if nondominated_sort(P) != brute_fronts(P):
            bad += 1
        g = estimate_true_pareto([P[: len(P) // 2 + 1], P[len(P) // 2 + 1:]] if len(P) > 1 else [P])
        oracle = brute_nondominated(P)
        if g.shape != oracle.shape or not np.array_equal(np.unique(g, axis=0), oracle):
            bad += 1
    return OracleResult("non-dominated sorting and union front", bad == 0, f"{bad} mismatches")


def check_gradients(rng, n_archs: int = 10) -> OracleResult:
    worst = max(gradient_relative_error(random_small_architecture(rng), rng) for _ in range(n_archs))
    return OracleResult("backprop vs finite differences", worst < 1e-4, f"worst relative error {worst:.2e}")


def check_friedman(rng) -> OracleResult:
    stat, p, _ = friedman_test(np.array([[3, 2, 1]] * 4, dtype=float))
    ok = abs(stat - 8.0) < 1e-12 and abs(p - math.exp(-4)) < 1e-12
    # large-sample agreement with a permutation distribution
    M = rng.random((30, 3)) + np.array([0.0, 0.1, 0.2])
    _, p_chi, _ = friedman_test(M)
    p_perm = permutation_pvalue(M, 4000, rng)
    ok &= abs(p_chi - p_perm) < 0.03
    return OracleResult("Friedman statistic", ok, f"chi2 p {p_chi:.4f} vs permutation p {p_perm:.4f}")


def check_hommel(rng) -> OracleResult:
    cases = {
        (0.01, 0.02, 0.04): (0.03, 0.04, 0.04),
        (0.01, 0.03, 0.06): (0.03, 0.06, 0.06),
        (0.001, 0.001, 0.001): (0.001, 0.001, 0.001),
    }
    ok = all(np.allclose(hommel_apv(list(k)), v) for k, v in cases.items())
    return OracleResult("Hommel adjusted p-values", ok, f"{len(cases)} hand-worked cases")


def check_das_dennis(rng) -> OracleResult:
    ok = all(len(das_dennis_weights(m, H)) == math.comb(H + m - 1, m - 1)
             for m, H in itertools.product(range(2, 5), range(1, 13)))
    return OracleResult("Das-Dennis lattice sizes", ok, "m <= 4, H <= 12")


SUITES: dict[str, Callable] = {
    "hypervolume": check_hypervolume,
    "dominance": check_dominance,
    "gradients": check_gradients,
    "friedman": check_friedman,
    "hommel": check_hommel,
    "das_dennis": check_das_dennis,
}


def run_selftest(seed: int = 0, hv_perturbation: float = 0.0) -> list[OracleResult]:
    results = []
    for name, fn in SUITES.items():
        rng = np.random.default_rng([seed, len(results)])
        if name == "hypervolume":
            results.append(fn(rng, perturbation=hv_perturbation))
        else:
            results.append(fn(rng))
    return results
