"""Search scenarios: learning environments, objective evaluators, runs, selection and hold-out scoring."""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .architecture import DecodedArchitecture, complexity, decode, genome_hash, genome_to_hex
from .errors import DegenerateDataError, LearningEnvironmentError, RunFailure, ShapeError
from .market_data import DatasetSplit, FeatureDataset, apply_standardization, fit_standardization
from .moea_core import ApproxParetoSet, ApsMember, hv_indicator, estimate_true_pareto, nondominated_mask, write_aps
from .neural_model import AggregateReport, TrainConfig, WeightSet, evaluate, init_weights, train
from .search_algorithms import EAGD, NSGA2, MoeaConfig, run_moea


class EnvKind(str, Enum):
    FULL = "FULL"
    SPLIT = "SPLIT"


@dataclass(frozen=True)
class LearningEnvironment:
    """FULL trains on pre-crisis plus crisis data; SPLIT trains on crisis data only
    and scores the pre-crisis partition as an extra objective."""

    kind: EnvKind

    @property
    def objective_count(self) -> int:
        return 2 if self.kind is EnvKind.FULL else 3

    @property
    def tag(self) -> str:
        return "LF" if self.kind is EnvKind.FULL else "LS"

    def training_set(self, split: DatasetSplit) -> FeatureDataset:
        if self.kind is EnvKind.FULL:
            return FeatureDataset.concat([split.pre_crisis, split.crisis_train])
        return split.crisis_train

    @classmethod
    def parse(cls, text: str) -> "LearningEnvironment":
        key = text.upper()
        aliases = {"LF": "FULL", "LS": "SPLIT"}
        return cls(EnvKind(aliases.get(key, key)))


FULL = LearningEnvironment(EnvKind.FULL)
SPLIT = LearningEnvironment(EnvKind.SPLIT)


def genome_seeds(eval_seed: int, genome) -> tuple[int, int]:
    """(init seed, shuffle seed) for one genome under one evaluator seed."""
    h = genome_hash(genome)
    state = np.random.SeedSequence([int(eval_seed), h & 0xFFFFFFFF, h >> 32]).generate_state(2)
    return int(state[0]), int(state[1])


class ObjectiveEvaluator:
    """Deterministic genome -> objective vector map for one learning environment.

    Standardization is fitted on the environment's training partition and
    applied to every partition it scores.  The hold-out partition is never
    read here.
    """

    def __init__(self, env: LearningEnvironment, split: DatasetSplit, train_cfg: TrainConfig,
                 eval_seed: int = 0, complexity_mode: str = "literal", cache: bool = True):
        self.env = env
        self.train_cfg = train_cfg
        self.eval_seed = int(eval_seed)
        self.complexity_mode = complexity_mode
        self.objective_count = env.objective_count
        self.n_bits = 86
        raw_train = env.training_set(split)
        ys = set(np.unique(raw_train.y).tolist())
        if ys != {0, 1}:
            raise LearningEnvironmentError(f"{env.tag} training partition holds a single class")
        self.scaler = fit_standardization(raw_train)
        self.train_set = apply_standardization(self.scaler, raw_train)
        self.test_set = apply_standardization(self.scaler, split.crisis_test)
        self.pre_set = apply_standardization(self.scaler, split.pre_crisis)
        self.calls = 0
        self.trainings = 0
        self._cache: dict[bytes, tuple[float, ...]] | None = {} if cache else None

    def fit(self, genome) -> tuple[DecodedArchitecture, WeightSet]:
        """Decode and train with the genome's own seeds."""
        genome = np.asarray(genome, dtype=np.uint8)
        arch = decode(genome)
        init_seed, shuffle_seed = genome_seeds(self.eval_seed, genome)
        try:
            weights = train(arch, init_weights(arch, init_seed), self.train_set,
                            replace(self.train_cfg, seed=shuffle_seed))
        except DegenerateDataError as exc:
            raise LearningEnvironmentError(str(exc)) from exc
        self.trainings += 1
        return arch, weights

    def __call__(self, genome) -> tuple[float, ...]:
        self.calls += 1
        genome = np.asarray(genome, dtype=np.uint8)
        key = genome.tobytes()
        if self._cache is not None and key in self._cache:
            return self._cache[key]
        arch, weights = self.fit(genome)
        objs = [evaluate(arch, weights, self.test_set).balanced_error, complexity(arch, self.complexity_mode)]
        if self.env.kind is EnvKind.SPLIT:
            objs.append(evaluate(arch, weights, self.pre_set).balanced_error)
        objs = tuple(float(v) for v in objs)
        if self._cache is not None:
            self._cache[key] = objs
        return objs


def make_evaluator(env: LearningEnvironment, split: DatasetSplit, train_cfg: TrainConfig,
                   eval_seed: int = 0, **kw) -> ObjectiveEvaluator:
    return ObjectiveEvaluator(env, split, train_cfg, eval_seed, **kw)


@dataclass(frozen=True)
class ScenarioSpec:
    timeline_id: str
    env: LearningEnvironment
    moea: str
    n_runs: int = 40
    moea_cfg: MoeaConfig = MoeaConfig()
    train_cfg: TrainConfig = TrainConfig()
    base_seed: int = 0
    eval_seed: int = 0
    complexity_mode: str = "literal"

    def __post_init__(self):
        if self.moea not in (NSGA2, EAGD):
            raise ValueError(f"unknown MOEA {self.moea!r}")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")

    @property
    def scenario_id(self) -> str:
        return f"{self.env.tag}+{self.moea}"

    def to_dict(self) -> dict:
        return {
            "timeline": self.timeline_id,
            "scenario": self.scenario_id,
            "environment": self.env.kind.value,
            "objective_count": self.env.objective_count,
            "moea": self.moea,
            "n_runs": self.n_runs,
            "moea_config": self.moea_cfg.to_dict(),
            "train_config": asdict(self.train_cfg),
            "base_seed": self.base_seed,
            "eval_seed": self.eval_seed,
            "complexity_mode": self.complexity_mode,
        }


def scenario_specs(timeline_id: str, **kw) -> list[ScenarioSpec]:
    """The four environment x MOEA scenarios of one timeline."""
    return [ScenarioSpec(timeline_id, env, moea, **kw) for env in (FULL, SPLIT) for moea in (NSGA2, EAGD)]


def parse_scenario_id(text: str) -> tuple[LearningEnvironment, str]:
    env, _, moea = text.partition("+")
    moea = moea.upper().replace("-", "").replace("NSGAII", "NSGA2")
    return LearningEnvironment.parse(env), moea


@dataclass
class ScenarioResult:
    spec: ScenarioSpec
    aps_per_run: list[ApproxParetoSet]
    failures: dict[int, str] = field(default_factory=dict)
    hv_per_run: list[float] = field(default_factory=list)
    wall_seconds: float = 0.0
    evaluations: list[int] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.failures


def run_seed(spec: ScenarioSpec, r: int) -> int:
    return spec.base_seed + r


def scenario_dir(out_dir, spec: ScenarioSpec) -> Path:
    return Path(out_dir) / spec.timeline_id / spec.scenario_id


def _write_log(path: Path, rows: list[dict], header: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


def _one_run(spec: ScenarioSpec, evaluator: ObjectiveEvaluator, r: int, out: Path | None,
             provenance: dict | None):
    seed = run_seed(spec, r)
    log: list[dict] = []
    calls0 = evaluator.calls
    cfg = replace(spec.moea_cfg, seed=seed)
    aps = run_moea(spec.moea, cfg, evaluator, log, scenario_id=spec.scenario_id, run_id=r,
                   complexity_mode=spec.complexity_mode)
    used = evaluator.calls - calls0
    if spec.moea == NSGA2 and used != cfg.budget:
        raise RunFailure(f"run {r}: {used} evaluations, expected {cfg.budget}")
    for m in aps.members:
        if len(m.objectives) != spec.env.objective_count:
            raise ShapeError(f"{spec.scenario_id} produced a {len(m.objectives)}-objective vector")
    if out is not None:
        header = {"spec": spec.to_dict(), "run": r, "seed": seed, "version": __version__,
                  "config": provenance or {}}
        write_aps(out / f"run_{r:03d}.aps.jsonl", [aps], header=header)
        _write_log(out / f"run_{r:03d}.log.csv", log, header)
    return aps, used


def _worker(spec: ScenarioSpec, split: DatasetSplit, runs: list[int], out, provenance):
    evaluator = make_evaluator(spec.env, split, spec.train_cfg, spec.eval_seed,
                               complexity_mode=spec.complexity_mode)
    done = {}
    for r in runs:
        try:
            done[r] = _one_run(spec, evaluator, r, out, provenance)
        except RunFailure as exc:
            done[r] = str(exc)
    return done


def run_scenario(spec: ScenarioSpec, split: DatasetSplit, out_dir=None, parallel: int = 1,
                 provenance: dict | None = None) -> ScenarioResult:
    """Run ``spec.n_runs`` independent searches; failed runs are recorded, not raised."""
    t0 = time.perf_counter()
    out = None
    if out_dir is not None:
        out = scenario_dir(out_dir, spec)
        out.mkdir(parents=True, exist_ok=True)
    runs = list(range(spec.n_runs))
    if parallel > 1 and spec.n_runs > 1:
        chunks = [runs[i::parallel] for i in range(min(parallel, spec.n_runs))]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            futures = [pool.submit(_worker, spec, split, c, out, provenance) for c in chunks]
            done = {}
            for f in futures:
                done.update(f.result())
    else:
        done = _worker(spec, split, runs, out, provenance)
    aps_list, failures, evals = [], {}, []
    for r in runs:
        item = done[r]
        if isinstance(item, str):
            failures[r] = item
            aps_list.append(ApproxParetoSet([], spec.scenario_id, r, run_seed(spec, r), spec.complexity_mode))
            evals.append(0)
        else:
            aps_list.append(item[0])
            evals.append(item[1])
    result = ScenarioResult(spec, aps_list, failures, wall_seconds=time.perf_counter() - t0, evaluations=evals)
    if out is not None:
        write_manifest(out / "manifest.json", result, provenance)
    return result


def write_manifest(path, result: ScenarioResult, provenance: dict | None = None) -> None:
    spec = result.spec
    arity = sorted({len(m.objectives) for a in result.aps_per_run for m in a.members})
    manifest = {
        "spec": spec.to_dict(),
        "config": provenance or {},
        "version": __version__,
        "runs": [{"run": r, "seed": run_seed(spec, r), "members": len(a), "evaluations": e}
                 for r, (a, e) in enumerate(zip(result.aps_per_run, result.evaluations))],
        "failures": {str(k): v for k, v in result.failures.items()},
        "complete": result.complete,
        "objective_count": spec.env.objective_count,
        "objective_arity_observed": arity,
        "objective_arity_ok": all(a == spec.env.objective_count for a in arity),
        "wall_seconds": round(result.wall_seconds, 3),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _normalized(F: np.ndarray) -> np.ndarray:
    lo, hi = F.min(axis=0), F.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (F - lo) / span


def select_knee(aps_collection: Sequence[ApproxParetoSet], complexity_index: int = 1) -> ApsMember:
    """Union front member nearest the normalised ideal point.

    Ties go to lower complexity, then to the lexicographically smaller genome.
    """
    members = [m for a in aps_collection for m in a.members]
    if not members:
        raise ValueError("no architectures to select from")
    uniq: dict[str, ApsMember] = {}
    for m in members:
        uniq.setdefault(genome_to_hex(m.genome), m)
    keys = sorted(uniq)
    F = np.array([uniq[k].objectives for k in keys])
    front = np.flatnonzero(nondominated_mask(F))
    Z = _normalized(F[front])
    dist = np.round(np.linalg.norm(Z, axis=1), 12)
    best = min(range(len(front)), key=lambda t: (dist[t], F[front[t], complexity_index], keys[front[t]]))
    return uniq[keys[front[best]]]


def posteriori_select(aps_collection: Sequence[ApproxParetoSet]) -> DecodedArchitecture:
    return select_knee(aps_collection).architecture


def holdout_evaluate(arch: DecodedArchitecture, split: DatasetSplit, env: LearningEnvironment,
                     cycles: int = 50, train_cfg: TrainConfig = TrainConfig(), seed: int = 0) -> AggregateReport:
    """Train ``cycles`` times with distinct seeds and score each model on the hold-out partition."""
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    arch.validate()
    raw_train = env.training_set(split)
    scaler = fit_standardization(raw_train)
    train_set = apply_standardization(scaler, raw_train)
    hold = apply_standardization(scaler, split.hold_out)
    reports = []
    for c in range(cycles):
        s_init, s_shuffle = np.random.SeedSequence([int(seed), c]).generate_state(2)
        w = train(arch, init_weights(arch, int(s_init)), train_set, replace(train_cfg, seed=int(s_shuffle)))
        reports.append(evaluate(arch, w, hold))
    return AggregateReport(reports)


def holdout_objectives(aps: ApproxParetoSet, evaluator: ObjectiveEvaluator, split: DatasetSplit) -> ApproxParetoSet:
    """Re-express an APS as (hold-out balanced error, complexity) using the search-time models."""
    hold = apply_standardization(evaluator.scaler, split.hold_out)
    members = []
    for m in aps.members:
        arch, w = evaluator.fit(m.genome)
        members.append(ApsMember(m.genome, (evaluate(arch, w, hold).balanced_error,
                                            complexity(arch, evaluator.complexity_mode)), arch))
    return ApproxParetoSet(members, aps.scenario_id, aps.run_id, aps.seed, aps.complexity_mode)


def hv_matrix(results: Sequence[ScenarioResult], split: DatasetSplit,
              evaluators: dict[str, ObjectiveEvaluator] | None = None) -> tuple[np.ndarray, list[list[ApproxParetoSet]]]:
    """Runs x scenarios matrix of HV indicators in (hold-out error, complexity) space.

    The true front is estimated from the union over every scenario and run.
    Fills each result's ``hv_per_run``.
    """
    projected = []
    for res in results:
        spec = res.spec
        ev = (evaluators or {}).get(spec.scenario_id) or make_evaluator(
            spec.env, split, spec.train_cfg, spec.eval_seed, complexity_mode=spec.complexity_mode)
        projected.append([holdout_objectives(a, ev, split) for a in res.aps_per_run])
    gamma = estimate_true_pareto([a for col in projected for a in col])
    n = min(len(col) for col in projected)
    M = np.zeros((n, len(results)))
    for j, (res, col) in enumerate(zip(results, projected)):
        res.hv_per_run = [hv_indicator(a, gamma) for a in col]
        M[:, j] = res.hv_per_run[:n]
    return M, projected
