"""``coevo`` command line: ingest, features, search, evaluate, report, selftest.

Exit codes: 0 success, 1 usage error, 2 data error, 3 run failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__
from .architecture import DEFAULT_LAYOUT, complexity, genome_from_hex, genome_to_hex
from .errors import CoevoError, DataError, EncodingError, RangeError, RunFailure, ShapeError
from .experiment import (LearningEnvironment, ScenarioResult, ScenarioSpec, hv_matrix, holdout_evaluate,
                         parse_scenario_id, run_scenario, scenario_dir, select_knee)
from .market_data import (PARTITIONS, TIMELINES, FeatureDataset, RegimeParams, TimelineSpec, compute_features,
                          load_ohlcv, segment_timeline, synth_regime_series, synthetic_timeline)
from .moea_core import ApsMember, read_aps
from .neural_model import TrainConfig
from .search_algorithms import MoeaConfig

log = logging.getLogger("coevo")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUN = 0, 1, 2, 3
SCENARIOS = ("LF+NSGA2", "LF+EAGD", "LS+NSGA2", "LS+EAGD")

DEFAULT_CONFIG = {
    "timeline": "timeline-1",
    "scenarios": list(SCENARIOS),
    "runs": 40,
    "seed": 0,
    "eval_seed": 0,
    "complexity_mode": "literal",
    "parallel": 1,
    "holdout_cycles": 50,
    "moea": {"population_size": 50, "iterations": 300, "crossover_rate": None,
             "nongeometric_probability": 0.8, "bitflip_probability": None, "mutation_rate": None,
             "learning_generations": 8, "neighborhood_fraction": 0.10, "archive_factor": 2},
    "train": {k: v for k, v in asdict(TrainConfig()).items() if k != "seed"},
    "synthetic": {
        "seed": 7,
        "n_pre": 200,
        "n_post": 300,
        "fractions": [0.5, 0.25, 0.25],
        "pre": {"drift": 0.0005, "volatility": 0.01, "autocorr": 0.6, "volume": 1.0e6},
        "post": {"drift": -0.0005, "volatility": 0.01, "autocorr": -0.6, "volume": 1.0e6},
    },
}

# budgets behind --desk; training is shortened as well so a full pipeline fits in minutes
DESK_OVERRIDES = {
    "runs": 5,
    "moea.population_size": 16,
    "moea.iterations": 30,
    "train.max_epochs": 10,
    "train.patience": 5,
    "train.learning_rate": 0.05,
    "holdout_cycles": 10,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---- configuration -----------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_dotted(cfg: dict, key: str, value) -> None:
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise UsageError(f"unknown config section {p!r} in {key!r}")
        node = node[p]
    if parts[-1] not in node and node is cfg:
        raise UsageError(f"unknown config key {key!r}")
    node[parts[-1]] = value


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        try:
            user = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        for key, value in _flatten(user).items():
            set_dotted(cfg, key, value)
    if getattr(args, "desk", False):
        for key, value in DESK_OVERRIDES.items():
            set_dotted(cfg, key, value)
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        set_dotted(cfg, key.strip(), _parse_value(value.strip()))
    for flag, key in (("runs", "runs"), ("iterations", "moea.iterations"), ("pop", "moea.population_size"),
                      ("parallel", "parallel"), ("timeline", "timeline"), ("cycles", "holdout_cycles")):
        value = getattr(args, flag, None)
        if value is not None:
            set_dotted(cfg, key, value)
    if getattr(args, "scenario", None):
        cfg["scenarios"] = list(args.scenario)
    if os.environ.get("COEVO_SEED"):
        try:
            cfg["seed"] = int(os.environ["COEVO_SEED"])
        except ValueError:
            raise UsageError("COEVO_SEED must be an integer") from None
    return cfg


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and k not in ("pre", "post", "timeline") and isinstance(DEFAULT_CONFIG.get(k, {}), dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _parse_kv(text: str) -> dict:
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        k, sep, v = part.partition("=")
        if not sep:
            raise UsageError(f"expected key=value, got {part!r}")
        out[k.strip()] = _parse_value(v.strip())
    return out


def moea_config(cfg: dict) -> MoeaConfig:
    return MoeaConfig(**cfg["moea"])


def train_config(cfg: dict) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    return TrainConfig(**{k: v for k, v in cfg["train"].items() if k in known})


# ---- data loading -------------------------------------------------------------

def _out(args) -> Path:
    return Path(args.out)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


def load_ingested(out: Path) -> tuple[FeatureDataset, TimelineSpec, dict]:
    manifest_path = out / "ingest_manifest.json"
    if not manifest_path.exists():
        raise DataError(f"{manifest_path} not found; run `coevo ingest` first")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    ds = FeatureDataset.from_csv(out / manifest["features"])
    return ds, TimelineSpec.from_dict(manifest["timeline"]), manifest


def _timeline(cfg: dict) -> TimelineSpec:
    t = cfg["timeline"]
    if isinstance(t, dict):
        return TimelineSpec.from_dict(t)
    if t not in TIMELINES:
        raise UsageError(f"unknown timeline {t!r}; choose from {sorted(TIMELINES)} or give a date-range object")
    return TIMELINES[t]


# ---- subcommands ---------------------------------------------------------------

def cmd_ingest(args, cfg) -> int:
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    if args.synthetic is not None:
        syn = cfg["synthetic"]
        syn.update(_parse_kv(args.synthetic))
        series = synth_regime_series(RegimeParams(**syn["pre"]), RegimeParams(**syn["post"]),
                                     (int(syn["n_pre"]), int(syn["n_post"])), int(syn["seed"]))
        spec = synthetic_timeline(series, int(syn["n_pre"]), tuple(syn["fractions"]),
                                  timeline_id=f"synthetic-{syn['seed']}")
        series.to_csv(out / "ohlcv.csv")
        source = {"synthetic": syn}
    elif args.ohlcv:
        series = load_ohlcv(args.ohlcv)
        spec = _timeline(cfg)
        source = {"ohlcv": Path(args.ohlcv).name}
    else:
        raise UsageError("ingest needs --ohlcv PATH or --synthetic [key=value,...]")
    ds = compute_features(series)
    split = segment_timeline(ds, spec)
    ds.to_csv(out / "features.csv")
    sizes = split.sizes()
    manifest = {"version": __version__, "source": source, "bars": len(series), "rows": len(ds),
                "features": "features.csv", "n_features": ds.n_features, "timeline": spec.to_dict(),
                "partitions": sizes}
    _write_json(out / "ingest_manifest.json", manifest)
    print(f"{len(ds)} labelled rows, partitions " + ", ".join(f"{k}={sizes[k]}" for k in PARTITIONS))
    return EXIT_OK


def cmd_features(args, cfg) -> int:
    series = load_ohlcv(args.ohlcv)
    ds = compute_features(series)
    dest = Path(args.dest) if args.dest else _out(args) / "features.csv"
    dest.parent.mkdir(parents=True, exist_ok=True)
    ds.to_csv(dest)
    print(f"wrote {len(ds)} rows x {ds.n_features} features to {dest}")
    return EXIT_OK


def _specs(cfg: dict, timeline_id: str) -> list[ScenarioSpec]:
    specs = []
    for sid in cfg["scenarios"]:
        env, moea = parse_scenario_id(sid)
        try:
            specs.append(ScenarioSpec(timeline_id, env, moea, int(cfg["runs"]), moea_config(cfg), train_config(cfg),
                                      int(cfg["seed"]), int(cfg["eval_seed"]), cfg["complexity_mode"]))
        except ValueError as exc:
            raise UsageError(f"scenario {sid!r}: {exc}") from None
    return specs


def provenance(cfg: dict) -> dict:
    """Resolved configuration embedded in every artifact (paths excluded)."""
    return {k: v for k, v in cfg.items() if k != "synthetic"} | {"version": __version__}


def cmd_search(args, cfg) -> int:
    out = _out(args)
    ds, spec, manifest = load_ingested(out)
    split = segment_timeline(ds, spec)
    prov = provenance(cfg) | {"timeline": spec.to_dict()}
    failed = 0
    for sspec in _specs(cfg, spec.timeline_id):
        result = run_scenario(sspec, split, out / "search", parallel=int(cfg["parallel"]), provenance=prov)
        failed += len(result.failures)
        for r, msg in result.failures.items():
            log.error("%s run %d failed: %s", sspec.scenario_id, r, msg)
        print(f"{sspec.scenario_id}: {sspec.n_runs - len(result.failures)}/{sspec.n_runs} runs, "
              f"{sum(len(a) for a in result.aps_per_run)} APS members -> {scenario_dir(out / 'search', sspec)}")
    return EXIT_RUN if failed else EXIT_OK


def _spec_from_manifest(d: dict) -> ScenarioSpec:
    env, moea = parse_scenario_id(d["scenario"])
    known = {f.name for f in fields(TrainConfig)}
    return ScenarioSpec(d["timeline"], env, moea, d["n_runs"], MoeaConfig(**d["moea_config"]),
                        TrainConfig(**{k: v for k, v in d["train_config"].items() if k in known}),
                        d["base_seed"], d["eval_seed"], d["complexity_mode"])


def load_results(out: Path, timeline_id: str, scenarios) -> list[ScenarioResult]:
    results = []
    for sid in scenarios:
        sdir = out / "search" / timeline_id / sid
        mpath = sdir / "manifest.json"
        if not mpath.exists():
            continue
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
        spec = _spec_from_manifest(manifest["spec"])
        aps = []
        for r in range(spec.n_runs):
            path = sdir / f"run_{r:03d}.aps.jsonl"
            if not path.exists():
                raise DataError(f"missing APS file {path}")
            sets = read_aps(path)
            aps.append(sets[0] if sets else None)
        fails = {int(k): v for k, v in manifest.get("failures", {}).items()}
        kept = [a for a in aps if a is not None and len(a)]
        results.append(ScenarioResult(spec, kept, fails))
    return results


def _selection_row(timeline_id, sid, member, agg) -> dict:
    arch = member.architecture
    return {
        "timeline": timeline_id,
        "scenario": sid,
        "genome_hex": genome_to_hex(member.genome),
        "n_features": arch.n_inputs,
        "features": list(arch.selected_features),
        "layers": [list(t) for t in arch.active_layers],
        "complexity": round(complexity(arch), 6),
        "accuracy_mean": round(agg.mean("overall_accuracy"), 6),
        "accuracy_sd": round(agg.std("overall_accuracy"), 6),
        "balanced_accuracy_mean": round(agg.mean("balanced_accuracy"), 6),
        "mcc_mean": round(agg.mean("mcc"), 6),
        "mcc_sd": round(agg.std("mcc"), 6),
        "cycles": len(agg.reports),
    }


def cmd_report(args, cfg) -> int:
    from .stats_report import compare_scenarios, emit_report, median_run

    out = _out(args)
    ds, spec, _ = load_ingested(out)
    results = load_results(out, spec.timeline_id, cfg["scenarios"])
    if len(results) < 2:
        raise DataError(f"need >= 2 scenarios with search artifacts under {out / 'search' / spec.timeline_id}, "
                        f"found {len(results)}; run `coevo search` first")
    split = segment_timeline(ds, spec)
    M, projected = hv_matrix(results, split)
    ids = [r.spec.scenario_id for r in results]
    stat = compare_scenarios(M, ids)
    fronts = {}
    for res, col in zip(results, projected):
        fronts[res.spec.scenario_id] = col[median_run(res.hv_per_run)]
    best = results[ids.index(stat.control)]
    member = select_knee(best.aps_per_run)
    agg = holdout_evaluate(member.architecture, split, best.spec.env, int(cfg["holdout_cycles"]),
                           best.spec.train_cfg, int(cfg["seed"]))
    row = _selection_row(spec.timeline_id, stat.control, member, agg)
    prov = provenance(cfg) | {"timeline": spec.to_dict()}
    paths = emit_report(stat, fronts, [row], out / "report", prov)
    for r in stat.rows():
        print(f"{r['scenario']:>10}  HV {r['hv_mean']} +/- {r['hv_sd']}  p={r['p_value']}  APV={r['apv']}  {r['reject']}")
    print(f"Friedman statistic {stat.statistic:.4f}, p = {stat.p_value:.4g}")
    print(f"selected ({stat.control}): {row['n_features']} features, layers {row['layers']}, "
          f"complexity {row['complexity']:.4f}, hold-out accuracy {row['accuracy_mean']:.4f}, MCC {row['mcc_mean']:.4f}")
    print(f"wrote {len(paths)} files to {out / 'report'}")
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    out = _out(args)
    ds, spec, _ = load_ingested(out)
    split = segment_timeline(ds, spec)
    if args.genome:
        genome = genome_from_hex(args.genome, DEFAULT_LAYOUT.n_bits)
        env = LearningEnvironment.parse(args.env)
        sid = f"{env.tag}+genome"
        member = ApsMember(genome, ())
        tcfg = train_config(cfg)
    else:
        if not args.scenario or len(args.scenario) != 1:
            raise UsageError("evaluate needs --genome HEX or exactly one --scenario")
        sid = cfg["scenarios"][0]
        results = load_results(out, spec.timeline_id, [sid])
        if not results:
            raise DataError(f"no search artifacts for {sid}")
        member = select_knee(results[0].aps_per_run)
        env = results[0].spec.env
        tcfg = results[0].spec.train_cfg
    agg = holdout_evaluate(member.architecture, split, env, int(cfg["holdout_cycles"]), tcfg, int(cfg["seed"]))
    row = _selection_row(spec.timeline_id, sid, member, agg)
    _write_json(out / "evaluate" / f"{sid}.json", {"config": provenance(cfg), "result": row})
    print(json.dumps(row, sort_keys=True))
    return EXIT_OK


def cmd_selftest(args, cfg) -> int:
    from .selftest import run_selftest

    results = run_selftest(int(cfg["seed"]), hv_perturbation=args.inject_hv_fault)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    ok = all(r.passed for r in results)
    print("selftest " + ("passed" if ok else "FAILED"))
    return EXIT_OK if ok else EXIT_RUN


# ---- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted config override")
    common.add_argument("--out", default="coevo-out", help="artifact directory (default: coevo-out)")
    common.add_argument("--desk", action="store_true", help="desk-scale budgets (pop 16, 30 iterations, 5 runs)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="coevo", description="Co-evolutionary feature and topology search for market-direction MLPs")
    p.add_argument("--version", action="version", version=f"coevo {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", parents=[common], help="load or synthesize OHLCV, compute features, segment")
    s.add_argument("--ohlcv", help="CSV with date,open,high,low,close,volume")
    s.add_argument("--synthetic", nargs="?", const="", default=None, metavar="K=V,...",
                   help="generate a regime-shift series, e.g. --synthetic seed=7")
    s.add_argument("--timeline", help="timeline-1 or timeline-2")

    s = sub.add_parser("features", parents=[common], help="compute the feature table of an OHLCV CSV")
    s.add_argument("ohlcv")
    s.add_argument("--dest", help="output CSV (default OUT/features.csv)")

    for name, helptext in (("search", "run MOEA scenarios"), ("evaluate", "hold-out evaluation"),
                           ("report", "HV statistics, median fronts, selection")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--scenario", action="append", choices=SCENARIOS)
        s.add_argument("--runs", type=int)
        s.add_argument("--iterations", type=int)
        s.add_argument("--pop", type=int)
        s.add_argument("--parallel", type=int)
        s.add_argument("--cycles", type=int)
        if name == "evaluate":
            s.add_argument("--genome", help="hex genome to evaluate instead of a scenario selection")
            s.add_argument("--env", default="LS", help="learning environment for --genome (LF or LS)")

    s = sub.add_parser("selftest", parents=[common], help="run the oracle suites")
    s.add_argument("--inject-hv-fault", type=float, default=0.0, help=argparse.SUPPRESS)
    return p


COMMANDS = {"ingest": cmd_ingest, "features": cmd_features, "search": cmd_search,
            "evaluate": cmd_evaluate, "report": cmd_report, "selftest": cmd_selftest}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"coevo: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ShapeError, EncodingError, RangeError, OSError) as exc:
        print(f"coevo: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RunFailure, CoevoError) as exc:
        print(f"coevo: run failure: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
