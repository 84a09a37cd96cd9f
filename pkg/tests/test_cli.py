import json
import subprocess
import sys

import pytest

from coevo.cli import EXIT_DATA, EXIT_OK, EXIT_RUN, EXIT_USAGE, main
from coevo.stats_report import read_csv_rows

TINY = ["--runs", "2", "--iterations", "3", "--pop", "6", "--set", "train.max_epochs=3", "--set", "train.patience=2"]


@pytest.fixture(scope="module")
def searched(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    assert main(["ingest", "--synthetic", "seed=7", "--out", str(out)]) == EXIT_OK
    assert main(["search", "--out", str(out), *TINY]) == EXIT_OK
    return out


def test_ingest_synthetic_manifest(searched):
    m = json.loads((searched / "ingest_manifest.json").read_text())
    assert m["source"]["synthetic"]["seed"] == 7
    assert m["n_features"] == 68
    assert all(v > 0 for v in m["partitions"].values())
    assert m["timeline"]["timeline_id"] == "synthetic-7"


def test_ingest_real_csv_timeline2(tmp_path):
    from coevo.market_data import RegimeParams, synth_regime_series
    s = synth_regime_series(RegimeParams(), RegimeParams(), (700, 700), seed=0, start="2016-06-01")
    s.to_csv(tmp_path / "nasdaq.csv")
    rc = main(["ingest", "--ohlcv", str(tmp_path / "nasdaq.csv"), "--timeline", "timeline-2",
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_OK
    parts = json.loads((tmp_path / "o" / "ingest_manifest.json").read_text())["partitions"]
    assert len(parts) == 4 and all(v > 0 for v in parts.values())


def test_malformed_csv_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("date,open,high,low,close,volume\n2020-01-01,1,2,0.5,1.5,10\n2020-01-02,x,2,1,1,1\n")
    assert main(["ingest", "--ohlcv", str(p), "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert ":3:" in capsys.readouterr().err


def test_ingest_without_source_is_usage_error(tmp_path):
    assert main(["ingest", "--out", str(tmp_path)]) == EXIT_USAGE


def test_unknown_flag_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["search", "--bogus"])
    assert exc.value.code == EXIT_USAGE


def test_unknown_config_key(tmp_path, searched):
    assert main(["search", "--out", str(searched), "--set", "nope=1"]) == EXIT_USAGE


def test_search_writes_run_files(searched):
    for sid in ("LF+NSGA2", "LF+EAGD", "LS+NSGA2", "LS+EAGD"):
        d = searched / "search" / "synthetic-7" / sid
        assert sorted(p.name for p in d.glob("*.aps.jsonl")) == ["run_000.aps.jsonl", "run_001.aps.jsonl"]
        m = json.loads((d / "manifest.json").read_text())
        assert m["objective_arity_ok"]
        assert m["config"]["moea"]["population_size"] == 6


def test_single_scenario_search_is_repeatable(tmp_path):
    out = tmp_path / "o"
    main(["ingest", "--synthetic", "seed=3", "--out", str(out)])
    args = ["search", "--out", str(out), "--scenario", "LS+EAGD", *TINY]
    assert main(args) == EXIT_OK
    path = out / "search" / "synthetic-3" / "LS+EAGD" / "run_001.aps.jsonl"
    first = path.read_bytes()
    assert main(args) == EXIT_OK
    assert path.read_bytes() == first


def test_search_before_ingest(tmp_path):
    assert main(["search", "--out", str(tmp_path)]) == EXIT_DATA


def test_report(searched):
    assert main(["report", "--out", str(searched), "--cycles", "2", *TINY]) == EXIT_OK
    rows = read_csv_rows(searched / "report" / "summary.csv")
    assert len(rows) == 4
    assert sum(r["reject"] == "control" for r in rows) == 1
    assert len(list((searched / "report" / "median_fronts").glob("*.csv"))) == 4
    sel = json.loads((searched / "report" / "selected_architectures.json").read_text())
    assert sel["selected"][0]["cycles"] == 2


def test_report_needs_two_scenarios(tmp_path, capsys):
    out = tmp_path / "o"
    main(["ingest", "--synthetic", "seed=3", "--out", str(out)])
    main(["search", "--out", str(out), "--scenario", "LF+NSGA2", *TINY])
    assert main(["report", "--out", str(out), "--scenario", "LF+NSGA2"]) == EXIT_DATA
    assert ">= 2 scenarios" in capsys.readouterr().err


def test_evaluate_scenario_and_genome(searched, capsys):
    assert main(["evaluate", "--out", str(searched), "--scenario", "LS+EAGD", "--cycles", "1", *TINY]) == EXIT_OK
    row = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert row["cycles"] == 1
    assert main(["evaluate", "--out", str(searched), "--genome", row["genome_hex"], "--env", "LF",
                 "--cycles", "1"]) == EXIT_OK
    assert main(["evaluate", "--out", str(searched), "--genome", "zz", "--cycles", "1"]) == EXIT_DATA


def test_features_command(tmp_path, regime_series):
    regime_series.to_csv(tmp_path / "bars.csv")
    assert main(["features", str(tmp_path / "bars.csv"), "--dest", str(tmp_path / "f.csv")]) == EXIT_OK
    assert (tmp_path / "f.csv").read_text().splitlines()[0].endswith("label,date")


def test_selftest_fault_injection(capsys, monkeypatch):
    from coevo import selftest
    # keep the fault run short: only the hypervolume suite matters here
    monkeypatch.setattr(selftest, "SUITES", {"hypervolume": selftest.SUITES["hypervolume"]})
    monkeypatch.setattr(selftest.check_hypervolume, "__defaults__", (8, 100_000, 0.0))
    assert main(["selftest"]) == EXIT_OK
    assert main(["selftest", "--inject-hv-fault", "0.05"]) == EXIT_RUN
    assert "FAIL" in capsys.readouterr().out


def test_console_script_runs():
    r = subprocess.run([sys.executable, "-m", "coevo.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("coevo ")
