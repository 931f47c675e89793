import json
import os
import subprocess
import sys

import pytest

from rankspace.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["ingest", "synthetic:correlated:5000", "--seed", "3", "--out", str(d / "t.npz")]) == 0
    assert main(["gen-workload", str(d / "t.npz"), "--mix", "insert-heavy", "--queries", "40",
                 "--out", str(d / "w.jsonl")]) == 0
    assert main(["build", str(d / "t.npz"), "--fanout", "16", "--out", str(d / "i.bin")]) == 0
    return d


def run(*args, env=None):
    full_env = dict(os.environ, **(env or {}))
    return subprocess.run([sys.executable, "-m", "rankspace", *args], capture_output=True, text=True, env=full_env)


def test_ingest_csv(tmp_path, capsys):
    src = tmp_path / "d.csv"
    src.write_text("city,temp\nOslo,3\nRome,18\nOslo,5\n")
    assert main(["ingest", str(src), "--out", str(tmp_path / "t.npz")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["rows"] == 3 and info["names"] == ["city", "temp"] and info["betas"] == [1, 2]


def test_bench_json(workdir, capsys):
    capsys.readouterr()
    assert main(["bench", str(workdir / "t.npz"), str(workdir / "w.jsonl"), "--methods", "ice,oracle",
                 "--budget", "2000"]) == 0
    reports = json.loads(capsys.readouterr().out)
    assert [r["method"] for r in reports] == ["ice", "oracle"]
    assert reports[0]["params"]["budget"] == 2000 and reports[1]["qmax"] == 1
    assert reports[0]["batch_size"] == pytest.approx(reports[0]["n_updates"] / 40)


def test_bench_csv_to_file(workdir):
    out = workdir / "r.csv"
    assert main(["--format", "csv", "bench", str(workdir / "t.npz"), str(workdir / "w.jsonl"),
                 "--methods", "sample", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0].startswith("method,n_queries")


def test_sweep(workdir, capsys):
    capsys.readouterr()
    assert main(["sweep", str(workdir / "t.npz"), str(workdir / "w.jsonl"), "--param", "dmax",
                 "--values", "1,6", "--hybrid", "off"]) == 0
    reports = json.loads(capsys.readouterr().out)
    assert [r["params"]["d_max"] for r in reports] == [1, 6]
    assert all(r["exact_fraction"] == 0 for r in reports)


def test_estimate_and_oracle(workdir, capsys):
    capsys.readouterr()
    box = ["--low", "0,0,0,0", "--high", "300,300,300,300"]
    assert main(["oracle", str(workdir / "t.npz"), *box]) == 0
    card = json.loads(capsys.readouterr().out)["card"]
    assert main(["estimate", str(workdir / "i.bin"), *box, "--qbound", "2"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["b"] == 20_000
    assert max(res["est"] / card, card / res["est"]) <= 2


def test_flag_before_subcommand(workdir, capsys):
    capsys.readouterr()
    assert main(["--budget", "123", "estimate", str(workdir / "i.bin"), "--low", "0,0,0,0",
                 "--high", "9,9,9,9", "--hybrid", "off"]) == 0
    assert json.loads(capsys.readouterr().out)["b"] == 123


def test_env_override(workdir):
    r = run("estimate", str(workdir / "i.bin"), "--low", "0,0,0,0", "--high", "50,50,50,50",
            env={"RANKSPACE_BUDGET": "77", "RANKSPACE_HYBRID": "off"})
    assert r.returncode == 0, r.stderr
    res = json.loads(r.stdout)
    assert res["b"] == 77 and res["used_exact_scan"] is False
    r = run("estimate", str(workdir / "i.bin"), "--low", "0,0,0,0", "--high", "50,50,50,50",
            "--budget", "55", env={"RANKSPACE_BUDGET": "77"})
    assert json.loads(r.stdout)["b"] == 55


def test_freeze_from_env(workdir, capsys):
    capsys.readouterr()
    os.environ["RANKSPACE_FREEZE"] = "1"
    try:
        assert main(["bench", str(workdir / "t.npz"), str(workdir / "w.jsonl"), "--methods", "ice"]) == 0
    finally:
        del os.environ["RANKSPACE_FREEZE"]
    assert json.loads(capsys.readouterr().out)[0]["params"]["freeze"] is True


@pytest.mark.parametrize("args,code,kind", [
    (["sweep", "{t}", "{w}", "--param", "fanout", "--values", "4"], 1, "ValueError"),
    (["bench", "{t}", "{w}", "--methods", "naru"], 1, "CliError"),
    (["build", "{t}"], 1, "CliError"),
    (["oracle", "{t}", "--low", "0,0", "--high", "1,1"], 1, "ValueError"),
    (["estimate", "/nonexistent.bin", "--low", "0", "--high", "1"], 1, "io"),
    (["frobnicate"], 2, "usage"),
])
def test_errors_are_json(workdir, args, code, kind):
    args = [a.format(t=workdir / "t.npz", w=workdir / "w.jsonl") for a in args]
    r = run(*args)
    assert r.returncode == code
    err = json.loads(r.stderr.strip().splitlines()[-1])
    assert err["error"] == kind and err["message"]


def test_schema_mismatch_exit_code(workdir, tmp_path):
    assert main(["ingest", "synthetic:uniform:100", "--out", str(tmp_path / "u.npz")]) == 0
    r = run("bench", str(tmp_path / "u.npz"), str(workdir / "w.jsonl"))
    assert r.returncode == 3
    assert json.loads(r.stderr)["error"] == "schema_mismatch"


def test_bad_env_value():
    r = run("build", "x", env={"RANKSPACE_FANOUT": "many"})
    assert r.returncode == 2 and json.loads(r.stderr)["error"] == "config"
