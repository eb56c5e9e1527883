"""CLI surface: run, compare, list-datatypes, exit codes."""

import subprocess
import sys

import pytest

from crdtlab.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_run_bundled_scenario(capsys):
    code, out, err = run_cli(capsys, "run", "addwins-cross")
    assert code == 0
    assert "query t=21 n=0 elements -> {a, b}" in out
    assert "result ok" in out


def test_run_advancer_scenario(capsys):
    code, out, _ = run_cli(capsys, "run", "advancer-concurrent")
    assert code == 0
    assert "ahead -> {a, b}" in out


def test_run_missing_file(capsys):
    code, out, err = run_cli(capsys, "run", "no-such-scenario")
    assert code == 2
    assert "error" in err


def test_run_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("nodes 1\ndatatype gset\napproach op\nat 9 node 0 add x\nat 5 node 0 add y\n")
    code, out, err = run_cli(capsys, "run", str(bad))
    assert code == 2
    assert "line 5" in err


def test_run_assertion_failure_exit_code(tmp_path, capsys):
    diverging = tmp_path / "d.scn"
    diverging.write_text(
        "nodes 2\ndatatype gcounter\napproach state\nsync_every 99\n"
        "at 1 node 0 inc\nat 2 assert-converged\n"
    )
    code, out, _ = run_cli(capsys, "run", str(diverging))
    assert code == 1
    assert "FAIL" in out


def test_run_trace_and_out(tmp_path, capsys):
    out_path = tmp_path / "report.txt"
    code, _, _ = run_cli(capsys, "run", "addwins-cross", "--trace", "--out", str(out_path))
    assert code == 0
    text = out_path.read_text()
    assert "invoke" in text and "deliver" in text


def test_run_seed_override(capsys):
    code, out, _ = run_cli(capsys, "run", "delta-vs-state-clique3", "--seed", "7")
    assert code == 0
    assert "seed=7" in out


def test_compare_agreement(capsys):
    code, out, _ = run_cli(capsys, "compare", "addwins-cross",
                           "--approaches", "op,pure,state,delta-improved")
    assert code == 0
    assert "equivalence ok" in out


def test_compare_unsupported_combination(capsys):
    code, _, err = run_cli(capsys, "compare", "auction-close", "--approaches", "op,pure")
    assert code == 2
    assert "does not support" in err


def test_compare_unknown_approach(capsys):
    code, _, err = run_cli(capsys, "compare", "addwins-cross", "--approaches", "op,quantum")
    assert code == 2


def test_list_datatypes(capsys):
    code, out, _ = run_cli(capsys, "list-datatypes")
    assert code == 0
    assert "orset" in out and "delta-improved" in out
    assert "addwins-cross" in out


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_reports_are_byte_identical_across_processes():
    cmd = [sys.executable, "-m", "crdtlab.cli", "run", "delta-vs-state-clique3", "--trace"]
    a = subprocess.run(cmd, capture_output=True, cwd="/root/pkg")
    b = subprocess.run(cmd, capture_output=True, cwd="/root/pkg")
    assert a.returncode == b.returncode == 0
    assert a.stdout == b.stdout
