"""Scenario comparison: Friedman test, rank-based post-hoc z, Hommel adjustment, median fronts, report files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import chi2, norm, rankdata

from .errors import EmptyDataError, ShapeError
from .moea_core import ApproxParetoSet

ALPHA = 0.05
SUMMARY_COLUMNS = ("scenario", "hv_mean", "hv_sd", "p_value", "apv", "reject")
SELECTION_COLUMNS = ("timeline", "scenario", "n_features", "features", "layers", "complexity",
                     "accuracy_mean", "accuracy_sd", "balanced_accuracy_mean", "mcc_mean", "mcc_sd", "cycles")


def _matrix(m) -> np.ndarray:
    M = np.asarray(m, dtype=float)
    if M.ndim != 2 or M.shape[0] < 2 or M.shape[1] < 2:
        raise ShapeError(f"need a blocks x treatments matrix with at least 2 x 2 cells, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ShapeError("matrix has missing or non-finite cells")
    return M


def block_ranks(m) -> np.ndarray:
    """Within-row ranks, 1 = highest value; ties share the average rank."""
    M = _matrix(m)
    return np.vstack([rankdata(-row, method="average") for row in M])


def friedman_statistic(ranks: np.ndarray) -> float:
    n, k = ranks.shape
    rbar = ranks.mean(axis=0)
    q = 12.0 * n / (k * (k + 1)) * float(np.sum((rbar - (k + 1) / 2.0) ** 2))
    ties = 0.0
    for row in ranks:
        _, counts = np.unique(row, return_counts=True)
        ties += float(np.sum(counts ** 3 - counts))
    denom = 1.0 - ties / (n * k * (k * k - 1))
    return 0.0 if denom <= 0 else q / denom


def friedman_test(m) -> tuple[float, float, np.ndarray]:
    """(statistic, chi-square p-value, average ranks) with higher values ranked best."""
    ranks = block_ranks(m)
    k = ranks.shape[1]
    q = friedman_statistic(ranks)
    p = 1.0 if q == 0 else float(chi2.sf(q, k - 1))
    return q, p, ranks.mean(axis=0)


def posthoc_pvalues(avg_ranks, n_blocks: int, control: int) -> np.ndarray:
    """One-sided normal p-values of rank-sum z against the control; control entry is NaN."""
    r = np.asarray(avg_ranks, dtype=float)
    k = len(r)
    se = math.sqrt(k * (k + 1) / (6.0 * n_blocks))
    z = (r - r[control]) / se
    p = norm.sf(z)
    p[control] = np.nan
    return p


def hommel_apv(raw_p) -> np.ndarray:
    """Hommel step-up adjusted p-values, returned in input order."""
    p = np.asarray(raw_p, dtype=float)
    if p.ndim != 1 or np.any((p < 0) | (p > 1)):
        raise ValueError("raw p-values must be a 1-D array in [0, 1]")
    n = len(p)
    if n <= 1:
        return p.copy()
    order = np.argsort(p, kind="stable")
    s = p[order]
    adj = s.copy()
    q = s.copy()
    for j in range(n, 1, -1):
        # smallest Simes-type bound over the j largest p-values
        cmin = float(np.min(j * s[n - j:] / np.arange(1, j + 1)))
        adj[n - j:] = np.maximum(adj[n - j:], cmin)
        q[n - j:] = np.maximum(q[n - j:], cmin)
        q[: n - j] = np.maximum(q[: n - j], np.minimum(j * s[: n - j], cmin))
        adj = np.maximum(adj, q)
    out = np.empty(n)
    out[order] = np.minimum(adj, 1.0)
    return out


@dataclass
class StatReport:
    scenarios: list[str]
    hv_mean: np.ndarray
    hv_sd: np.ndarray
    statistic: float
    p_value: float
    avg_ranks: np.ndarray
    control: str
    raw_p: dict[str, float] = field(default_factory=dict)
    apv: dict[str, float] = field(default_factory=dict)
    alpha: float = ALPHA

    @property
    def friedman_rejects(self) -> bool:
        return self.p_value <= self.alpha

    def rejected(self, scenario: str) -> bool:
        return self.apv[scenario] <= self.alpha

    def rows(self) -> list[dict]:
        out = []
        for j, name in enumerate(self.scenarios):
            row = {"scenario": name, "hv_mean": f"{self.hv_mean[j]:.6f}", "hv_sd": f"{self.hv_sd[j]:.6f}"}
            if name == self.control:
                row.update(p_value="-", apv="-", reject="control")
            else:
                row.update(p_value=f"{self.raw_p[name]:.6g}", apv=f"{self.apv[name]:.6g}",
                           reject="yes" if self.rejected(name) else "no")
            out.append(row)
        return out

    def to_dict(self) -> dict:
        return {
            "scenarios": self.scenarios,
            "hv_mean": self.hv_mean.tolist(),
            "hv_sd": self.hv_sd.tolist(),
            "friedman_statistic": self.statistic,
            "friedman_p": self.p_value,
            "avg_ranks": self.avg_ranks.tolist(),
            "control": self.control,
            "raw_p": self.raw_p,
            "apv": self.apv,
            "alpha": self.alpha,
        }


def compare_scenarios(m, scenarios: Sequence[str], alpha: float = ALPHA) -> StatReport:
    """Friedman omnibus test, then control-vs-rest post-hoc with Hommel APVs."""
    M = _matrix(m)
    if len(scenarios) != M.shape[1]:
        raise ShapeError("one scenario id per column required")
    stat, p, rbar = friedman_test(M)
    control = min(range(len(scenarios)), key=lambda j: (rbar[j], scenarios[j]))
    raw = posthoc_pvalues(rbar, M.shape[0], control)
    others = [j for j in range(len(scenarios)) if j != control]
    apv = hommel_apv(raw[others])
    sd = M.std(axis=0, ddof=1)
    return StatReport(
        list(scenarios), M.mean(axis=0), sd, stat, p, rbar, scenarios[control],
        {scenarios[j]: float(raw[j]) for j in others},
        {scenarios[j]: float(a) for j, a in zip(others, apv)},
        alpha,
    )


def median_run(hv_per_run: Sequence[float]) -> int:
    """Index of the lower-median HV (ties by run index)."""
    if len(hv_per_run) == 0:
        raise EmptyDataError("no runs to take a median over")
    order = sorted(range(len(hv_per_run)), key=lambda r: (hv_per_run[r], r))
    return order[(len(order) - 1) // 2]


def median_front(result) -> ApproxParetoSet:
    """APS of the run whose HV indicator is the lower median."""
    return result.aps_per_run[median_run(result.hv_per_run)]


def _header_line(provenance: Mapping | None) -> str:
    return "# " + json.dumps(provenance or {}, sort_keys=True) + "\n"


def read_csv_rows(path) -> list[dict]:
    """Read a report CSV, skipping its ``#`` provenance line."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def emit_report(stat: StatReport, fronts: Mapping[str, ApproxParetoSet], selection: Sequence[Mapping],
                out_dir, provenance: Mapping | None = None, objective_names=("e_hold", "complexity")) -> list[Path]:
    """Write the scenario summary, one median-front CSV per scenario and the selected-architecture table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "summary.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(_header_line(provenance))
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        w.writerows(stat.rows())
    written.append(path)
    path = out / "statistics.json"
    path.write_text(json.dumps({"config": provenance or {}, **stat.to_dict()}, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    written.append(path)
    fdir = out / "median_fronts"
    fdir.mkdir(exist_ok=True)
    for name, aps in fronts.items():
        path = fdir / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(_header_line({**(provenance or {}), "scenario": name, "run": aps.run_id, "seed": aps.seed}))
            w = csv.writer(fh)
            w.writerow(list(objective_names))
            for row in aps.objectives():
                w.writerow([f"{v:.6f}" for v in row])
        written.append(path)
    path = out / "selected_architectures.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(_header_line(provenance))
        w = csv.DictWriter(fh, fieldnames=SELECTION_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for row in selection:
            w.writerow({k: (json.dumps(v) if isinstance(v, (list, tuple)) else v) for k, v in row.items()})
    written.append(path)
    path = out / "selected_architectures.json"
    path.write_text(json.dumps({"config": provenance or {}, "selected": list(selection)}, indent=2,
                               sort_keys=True, default=list) + "\n", encoding="utf-8")
    written.append(path)
    return written
