"""End-to-end command-line runs through subprocesses: exit codes,
CSV/JSONL outputs, config overlay, rerun determinism."""

import json
import os
import subprocess
import sys

import pytest


def run_cli(*argv, env=None):
    e = dict(os.environ)
    if env:
        e.update(env)
    return subprocess.run([sys.executable, "-m", "combwalks.cli", *argv],
                          capture_output=True, text=True, env=e)


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


@pytest.mark.parametrize("sub", [[], ["simulate"], ["oracle"], ["stats"],
                                 ["fit"], ["verify"]])
def test_help_screens(sub):
    res = run_cli(*sub, "--help")
    assert res.returncode == 0
    assert "usage" in res.stdout


def test_no_arguments_is_usage_error():
    res = run_cli()
    assert res.returncode == 2


def test_simulate_writes_jsonl_and_reports(tmp_path):
    out = tmp_path / "runs.jsonl"
    res = run_cli("simulate", "--graph", "comb:line", "--steps", "512",
                  "--replicas", "30", "--seed", "5", "--out", str(out))
    assert res.returncode == 0, res.stderr
    assert "replicas=30" in res.stdout and "total_meetings=" in res.stdout
    lines = out.read_text().splitlines()
    assert len(lines) == 30
    rec = json.loads(lines[0])
    assert rec["T"] == 512 and rec["replica"] == 0
    assert rec["meetings"] == len(rec["collisions"])
    assert lines == sorted(lines, key=lambda ln: json.loads(ln)["replica"])


def test_simulate_requires_out_steps_and_seed(tmp_path):
    assert run_cli("simulate", "--graph", "line", "--steps", "8",
                   "--replicas", "1").returncode == 2
    assert run_cli("simulate", "--graph", "line", "--replicas", "1",
                   "--out", str(tmp_path / "x.jsonl")).returncode == 2
    assert run_cli("simulate", "--graph", "line", "--steps", "8",
                   "--replicas", "1",
                   "--out", str(tmp_path / "x.jsonl")).returncode == 2


def test_simulate_rejects_unknown_graph(tmp_path):
    res = run_cli("simulate", "--graph", "circle", "--steps", "8",
                  "--replicas", "1", "--seed", "0",
                  "--out", str(tmp_path / "x.jsonl"))
    assert res.returncode == 2


def test_simulate_rejects_bad_start(tmp_path):
    res = run_cli("simulate", "--graph", "comb:line", "--start", "9",
                  "--steps", "8", "--replicas", "1", "--seed", "0",
                  "--out", str(tmp_path / "x.jsonl"))
    assert res.returncode == 2


def test_simulate_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        res = run_cli("simulate", "--graph", "comb:cycle:4", "--steps", "256",
                      "--replicas", "12", "--seed", "8", "--out", str(out))
        assert res.returncode == 0
    assert a.read_bytes() == b.read_bytes()


def test_truncation_escape_exits_one(tmp_path):
    res = run_cli("simulate", "--graph", "line", "--steps", "500",
                  "--replicas", "1", "--seed", "0", "--truncation-radius", "3",
                  "--out", str(tmp_path / "x.jsonl"))
    assert res.returncode == 1
    assert "radius" in res.stderr


def test_oracle_return_values(tmp_path):
    out = tmp_path / "ret.csv"
    res = run_cli("oracle", "return", "--graph", "line", "--nmax", "64",
                  "--out", str(out))
    assert res.returncode == 0
    header, rows = read_csv(out)
    assert header == ["n", "value"]
    assert len(rows) == 32
    vals = {int(r[0]): float(r[1]) for r in rows}
    assert vals[2] == 0.5
    assert vals[4] == 0.375


def test_oracle_meetings_columns_consistent(tmp_path):
    out = tmp_path / "meet.csv"
    res = run_cli("oracle", "meetings", "--graph", "cycle:5", "--nmax", "32",
                  "--out", str(out))
    assert res.returncode == 0
    header, rows = read_csv(out)
    assert header == ["n", "partial", "increment"]
    partial = [float(r[1]) for r in rows]
    inc = [float(r[2]) for r in rows]
    acc = 0.0
    for p, i in zip(partial, inc):
        acc += i
        assert abs(acc - p) < 1e-12


def test_oracle_persite_runs(tmp_path):
    out = tmp_path / "site.csv"
    res = run_cli("oracle", "persite", "--graph", "comb:cycle:4",
                  "--nmax", "32", "--out", str(out))
    assert res.returncode == 0
    header, rows = read_csv(out)
    assert header == ["n", "value"] and len(rows) == 32
    assert all(float(r[1]) > 0 for r in rows)


def test_oracle_needs_graph_and_nmax():
    assert run_cli("oracle", "return", "--graph", "line").returncode == 2
    assert run_cli("oracle", "return", "--nmax", "8").returncode == 2


def test_verify_green(tmp_path):
    out = tmp_path / "checks.csv"
    res = run_cli("verify", "--out", str(out))
    assert res.returncode == 0
    assert "failures=0" in res.stderr
    header, rows = read_csv(out)
    assert header == ["check", "residual", "passed"]
    assert len(rows) == 540
    assert all(r[2] == "1" for r in rows)


def test_budget_env_is_honored(tmp_path):
    res = run_cli("oracle", "return", "--graph", "grid2d", "--nmax", "4096",
                  "--out", str(tmp_path / "x.csv"),
                  env={"COMBWALKS_BUDGET": "50000"})
    assert res.returncode == 3


def test_fit_pipeline_recovers_line_exponent(tmp_path):
    ret = tmp_path / "ret.csv"
    assert run_cli("oracle", "return", "--graph", "line", "--nmax", "512",
                   "--out", str(ret)).returncode == 0
    fit = tmp_path / "fit.csv"
    res = run_cli("fit", "--input", str(ret), "--column", "value",
                  "--range", "4:512", "--out", str(fit))
    assert res.returncode == 0
    header, rows = read_csv(fit)
    assert header[:3] == ["slope", "intercept", "stderr"]
    assert abs(float(rows[0][0]) + 0.5) < 0.02


def test_fit_errors(tmp_path):
    ret = tmp_path / "ret.csv"
    run_cli("oracle", "return", "--graph", "line", "--nmax", "64",
            "--out", str(ret))
    assert run_cli("fit", "--input", str(ret), "--column", "nope",
                   "--range", "4:64").returncode == 4
    assert run_cli("fit", "--input", str(ret), "--column", "value",
                   "--range", "1024:4096").returncode == 5
    assert run_cli("fit", "--input", str(tmp_path / "missing.csv"),
                   "--column", "value", "--range", "4:64").returncode == 2


def test_stats_grid_report(tmp_path):
    runs = tmp_path / "runs.jsonl"
    run_cli("simulate", "--graph", "comb:line", "--steps", "1024",
            "--replicas", "60", "--seed", "6", "--out", str(runs))
    out = tmp_path / "grid.csv"
    res = run_cli("stats", "--report", "grid", "--inputs", str(runs),
                  "--r-range", "2:6", "--k-range", "0:3", "--out", str(out))
    assert res.returncode == 0, res.stderr
    header, rows = read_csv(out)
    assert header == ["r", "k", "Z_mean", "A_prob", "W_mean", "W_given_A",
                      "count", "cond_count"]
    assert len(rows) == 5 * 4
    assert all(r[6] == "60" for r in rows)


def test_stats_grid_empty_input_writes_zero_rows(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    out = tmp_path / "grid.csv"
    res = run_cli("stats", "--report", "grid", "--inputs", str(empty),
                  "--r-range", "1:2", "--k-range", "0:1", "--out", str(out))
    assert res.returncode == 0
    _, rows = read_csv(out)
    assert len(rows) == 4
    assert all(r[2] == "0.0" and r[6] == "0" for r in rows)


def test_stats_malformed_jsonl_is_schema_error(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"not": "a summary"}\n')
    res = run_cli("stats", "--report", "grid", "--inputs", str(bad),
                  "--r-range", "1:2", "--k-range", "0:1")
    assert res.returncode == 4


def test_stats_growth_labels_by_file_stem(tmp_path):
    paths = []
    for name, spec in [("combo", "comb:line"), ("flat", "line")]:
        p = tmp_path / f"{name}.jsonl"
        run_cli("simulate", "--graph", spec, "--steps", "64",
                "--replicas", "10", "--seed", "2", "--out", str(p))
        paths.append(str(p))
    out = tmp_path / "growth.csv"
    res = run_cli("stats", "--report", "growth", "--inputs", *paths,
                  "--out", str(out))
    assert res.returncode == 0
    _, rows = read_csv(out)
    labels = {r[0] for r in rows}
    assert labels == {"combo", "flat"}


def test_stats_lil_and_drift_reports(tmp_path):
    comb = tmp_path / "comb.jsonl"
    run_cli("simulate", "--graph", "comb:line", "--steps", "256",
            "--replicas", "6", "--seed", "1", "--lil-alphas", "0.75",
            "--out", str(comb))
    out = tmp_path / "lil.csv"
    res = run_cli("stats", "--report", "lil", "--alpha", "0.75",
                  "--inputs", str(comb), "--out", str(out))
    assert res.returncode == 0
    header, rows = read_csv(out)
    assert header == ["replica", "violations", "last_violation"]
    assert len(rows) == 6
    assert run_cli("stats", "--report", "lil", "--alpha", "0.5",
                   "--inputs", str(comb)).returncode == 2

    ladder = tmp_path / "ladder.jsonl"
    run_cli("simulate", "--graph", "biased-ladder", "--steps", "400",
            "--replicas", "8", "--seed", "1", "--spine-stride", "2",
            "--out", str(ladder))
    drift = tmp_path / "drift.csv"
    res = run_cli("stats", "--report", "drift", "--inputs", str(ladder),
                  "--out", str(drift))
    assert res.returncode == 0
    header, rows = read_csv(drift)
    assert header == ["per_move", "per_half_step", "moves"]
    assert 0.0 < float(rows[0][0]) < 1.0


def test_stats_drift_without_traces_is_degenerate(tmp_path):
    runs = tmp_path / "runs.jsonl"
    run_cli("simulate", "--graph", "comb:line", "--steps", "64",
            "--replicas", "2", "--seed", "0", "--out", str(runs))
    res = run_cli("stats", "--report", "drift", "--inputs", str(runs))
    assert res.returncode == 5


def test_config_file_overlay(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text(
        "# ensemble settings\n"
        "graph = comb:line\n"
        "steps = 64\n"
        "replicas = 5\n"
        "seed = 9\n")
    out = tmp_path / "runs.jsonl"
    res = run_cli("simulate", "--config", str(conf), "--steps", "32",
                  "--out", str(out))
    assert res.returncode == 0
    recs = [json.loads(ln) for ln in out.read_text().splitlines()]
    assert len(recs) == 5                   # from the file
    assert all(r["T"] == 32 for r in recs)  # flag wins over the file
    missing = run_cli("simulate", "--config", str(tmp_path / "nope.conf"),
                      "--out", str(out))
    assert missing.returncode == 2
