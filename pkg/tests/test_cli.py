import csv
import io
import json
import subprocess
import sys

import pytest

from evograph.cli import run
from evograph.graphs import EvolutionaryGraph


def call(*argv):
    buf = io.StringIO()
    code = run(list(argv), buf)
    return code, buf.getvalue()


class TestGraph:
    def test_superstar_json(self):
        code, out = call("graph", "--family", "superstar", "--k", "4", "--l", "3", "--m", "5", "--no-meta")
        assert code == 0
        assert json.loads(out)["n"] == 28

    def test_megastar_out_file(self, tmp_path):
        path = tmp_path / "g.json"
        code, out = call("graph", "--family", "megastar", "--k", "3", "--l", "2", "--m", "4", "--out", str(path))
        assert code == 0 and "n=17" in out
        g = EvolutionaryGraph.from_json(path)
        assert g.n == 17 and g.family == "megastar"

    def test_footer(self):
        _, out = call("graph", "--family", "complete", "--n", "3")
        assert out.splitlines()[-1].startswith("# evograph ")


class TestExact:
    def test_counterexample(self):
        code, out = call("exact", "--family", "counterexample", "--r", "2", "--no-meta")
        assert code == 0
        assert "uniform fixation 0.5714285714" in out
        lines = [line for line in out.splitlines() if "vertex" in line]
        assert [float(line.split()[-1]) for line in lines] == pytest.approx([10 / 21, 13 / 21, 13 / 21])

    def test_json(self):
        code, out = call("exact", "--family", "complete", "--n", "3", "--r", "2", "--format", "json", "--no-meta")
        data = json.loads(out)
        assert code == 0 and data["uniform"] == pytest.approx(4 / 7)

    def test_large_star_uses_lumped_chain(self):
        code, out = call("exact", "--family", "star", "--l", "200", "--r", "2", "--format", "json", "--no-meta")
        assert code == 0 and json.loads(out)["method"] == "lumped star chain"

    def test_over_cap_is_usage_error(self, capsys):
        code, _ = call("exact", "--family", "complete", "--n", "25", "--r", "2")
        assert code == 2
        assert "usage:" in capsys.readouterr().err


class TestSimulate:
    def test_neutral_k3(self):
        code, out = call("simulate", "--family", "complete", "--n", "3", "--r", "1", "--trials", "100000",
                         "--seed", "1", "--format", "json", "--no-meta", "--workers", "1")
        data = json.loads(out)
        assert code == 0
        assert data["ci"][0] <= 1 / 3 <= data["ci"][1]
        assert data["seed"] == 1 and data["trials"] == 100_000

    def test_byte_identical(self):
        argv = ("simulate", "--family", "star", "--l", "30", "--r", "2", "--trials", "2000", "--seed", "7",
                "--no-meta", "--workers", "1")
        assert call(*argv) == call(*argv)

    def test_workers_do_not_change_output(self):
        base = ("simulate", "--family", "complete", "--n", "4", "--r", "1.5", "--trials", "900", "--seed", "5",
                "--format", "csv", "--no-meta")
        assert call(*base, "--workers", "1") == call(*base, "--workers", "3")

    def test_csv(self):
        code, out = call("simulate", "--family", "complete", "--n", "4", "--r", "2", "--trials", "50",
                         "--seed", "2", "--format", "csv", "--no-meta", "--workers", "1")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and len(rows) == 1 and rows[0]["trials"] == "50"

    def test_generated_seed_reported(self, capsys):
        code, out = call("simulate", "--family", "complete", "--n", "3", "--r", "2", "--trials", "10",
                         "--format", "json", "--no-meta", "--workers", "1")
        err = capsys.readouterr().err
        assert code == 0 and "generated seed" in err
        assert str(json.loads(out)["seed"]) in err

    def test_initial_policy(self):
        code, out = call("simulate", "--family", "star", "--l", "3", "--r", "2", "--trials", "20", "--seed", "0",
                         "--initial", "set:0,1,2,3", "--format", "json", "--no-meta", "--workers", "1")
        data = json.loads(out)
        assert code == 0 and data["point"] == 1.0 and data["ci"] == [1.0, 1.0]

    def test_all_censored_exit_1(self, capsys):
        code, _ = call("simulate", "--family", "complete", "--n", "40", "--r", "1", "--trials", "5", "--seed", "0",
                       "--initial", "set:0,1,2,3,4,5", "--max-steps", "1", "--workers", "1")
        assert code == 1
        assert "censored" in capsys.readouterr().err

    @pytest.mark.parametrize("extra", [["--l", "0"], ["--l", "x"], ["--trials", "-5"], ["--r", "0"],
                                       ["--level", "1.2"], ["--initial", "pairs"], ["--family", "torus"]])
    def test_bad_arguments_exit_2(self, extra, capsys):
        argv = ["simulate", "--family", "star", "--l", "3", "--r", "2", "--trials", "10", "--seed", "0"]
        code, _ = call(*argv, *extra)
        assert code == 2
        assert "usage:" in capsys.readouterr().err

    def test_missing_required(self, capsys):
        assert call("simulate", "--family", "star", "--l", "3")[0] == 2
        assert call()[0] == 2


class TestSweep:
    def write_spec(self, tmp_path, **over):
        data = {"family": "complete", "grid": [{"n": 3}, {"n": 4}], "r": [2.0], "trials": 300, "seed": 1,
                "checks": ["exact"]}
        data.update(over)
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(data))
        return path

    def test_csv_out(self, tmp_path):
        out_path = tmp_path / "results.csv"
        code, _ = call("sweep", "--spec", str(self.write_spec(tmp_path)), "--out", str(out_path),
                       "--workers", "1", "--no-meta")
        rows = list(csv.DictReader(out_path.open()))
        assert code == 0
        assert [row["status"] or row["scenario"] for row in rows] == ["ok", "exact", "ok", "exact"]
        assert json.loads(rows[0]["graph"])["n"] == 3

    def test_json_lines_stdout(self, tmp_path):
        code, out = call("sweep", "--spec", str(self.write_spec(tmp_path)), "--format", "json", "--no-meta",
                         "--workers", "1")
        rows = [json.loads(line) for line in out.splitlines()]
        assert code == 0 and len(rows) == 4 and rows[1]["verdict"] == "pass"

    def test_bad_spec(self, tmp_path, capsys):
        assert call("sweep", "--spec", str(tmp_path / "missing.json"))[0] == 2
        assert call("sweep", "--spec", str(self.write_spec(tmp_path, grid=[])))[0] == 2


class TestVerify:
    def test_selected_ids(self):
        code, out = call("verify", "--suite", "1,3", "--no-meta")
        assert code == 0
        assert out.count("[PASS]") == 2 and "2/2 checks passed" in out

    def test_json(self):
        code, out = call("verify", "--suite", "2", "--format", "json", "--no-meta")
        data = json.loads(out)
        assert code == 0 and data["passed"] and data["checks"][0]["id"] == 2

    def test_unknown_id(self, capsys):
        assert call("verify", "--suite", "1,99")[0] == 2

    def test_failure_exits_1(self, monkeypatch):
        from evograph import verification

        monkeypatch.setitem(verification.CHECKS, 1, ("always fails", lambda quick: (False, "forced", {})))
        code, out = call("verify", "--suite", "1", "--no-meta")
        assert code == 1 and "[FAIL]" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "evograph", "exact", "--family", "complete", "--n", "2",
                           "--r", "2", "--no-meta"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "uniform fixation 0.6666666666666666" in proc.stdout


def test_version():
    proc = subprocess.run([sys.executable, "-m", "evograph", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("evograph ")
