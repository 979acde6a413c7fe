import io
import json
import subprocess
import sys

import numpy as np
import pytest

from finita.cli import dispatch
from finita.core import JointDistribution, WordMapping, apply_mapping, entropy, sum_marginal_entropies


def run(argv, capsys, stdin=None, monkeypatch=None):
    if stdin is not None:
        monkeypatch.setattr(sys, "stdin", io.StringIO(stdin))
    code = dispatch(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def summary(text):
    return {k: v for k, _, v in (line.partition(": ") for line in text.splitlines()) if v}


@pytest.fixture
def scrambled(tmp_path):
    path = tmp_path / "j.json"
    assert dispatch(["gen", "scrambled-product", "--n", "5", "--seed", "7", "--out", str(path),
                     "--truth", str(tmp_path / "truth.json")]) == 0
    return path


def test_gen_writes_joint_and_manifest(scrambled, tmp_path):
    j = JointDistribution.from_dict(json.loads(scrambled.read_text()))
    assert j.n == 5
    man = json.loads((tmp_path / "j.json.manifest.json").read_text())
    assert man["subcommand"] == "gen scrambled-product"
    assert man["seed"] == 7
    assert "version" in man and "wall_clock_seconds" in man
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert len(truth["pi"]) == 5


def test_gen_zipf_to_stdout(capsys):
    code, out, _ = run(["gen", "zipf", "--q", "4", "--s", "1.6", "--n", "2"], capsys)
    assert code == 0
    j = JointDistribution.from_dict(json.loads(out))
    assert (j.n, j.q) == (2, 4)


def test_solve_exact_product(scrambled, tmp_path, capsys):
    out_map = tmp_path / "m.json"
    code, out, _ = run(["solve", "exact-product", "--input", str(scrambled), "--out", str(out_map)], capsys)
    assert code == 0
    s = summary(out)
    assert float(s["total_correlation_after"]) == pytest.approx(0.0, abs=1e-9)
    m = WordMapping.from_dict(json.loads(out_map.read_text()))
    j = JointDistribution.from_dict(json.loads(scrambled.read_text()))
    assert sum_marginal_entropies(apply_mapping(j, m)) == pytest.approx(entropy(j.probs), abs=1e-9)


@pytest.mark.parametrize("cmd", [["solve", "bb"], ["solve", "plr", "--k", "6"], ["solve", "qary", "--inits", "20"],
                                 ["solve", "qary", "--exhaustive"], ["solve", "constrained"],
                                 ["solve", "constrained", "--immune", "--gens", "5"]])
def test_solve_commands_report(cmd, tmp_path, capsys):
    path = tmp_path / "j.json"
    path.write_text(json.dumps(JointDistribution(3, 2, np.random.default_rng(1).dirichlet(np.ones(8))).to_dict()))
    code, out, _ = run(cmd + ["--input", str(path)], capsys)
    assert code == 0
    s = summary(out)
    assert float(s["final_sum_marginals"]) <= float(s["initial_sum_marginals"]) + 1e-9
    assert len(json.loads(s["mapping"])) == 8


def test_solve_reads_stdin(capsys, monkeypatch):
    doc = json.dumps({"n": 2, "q": 2, "probs": [0.4, 0.1, 0.3, 0.2]})
    code, out, _ = run(["solve", "bb"], capsys, doc, monkeypatch)
    assert code == 0
    assert json.loads(summary(out)["mapping"]) is not None


def test_plr_curve_csv(scrambled, tmp_path, capsys):
    curve = tmp_path / "curve.csv"
    code, _, _ = run(["solve", "plr", "--input", str(scrambled), "--k", "6", "--emit-curve", str(curve)], capsys)
    assert code == 0
    lines = curve.read_text().splitlines()
    assert lines[0].split(",")[0] == "k"
    assert len(lines) >= 3


def test_usage_errors_exit_2(tmp_path, capsys, monkeypatch):
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2, 3]")
    assert run(["solve", "bb", "--input", str(bad)], capsys)[0] == 2
    assert run(["solve", "bb", "--input", str(tmp_path / "missing.json")], capsys)[0] == 2
    assert run(["solve", "nope"], capsys)[0] == 2
    assert run(["solve", "bb"], capsys, "", monkeypatch)[0] == 2
    monkeypatch.setenv("FINITA_THREADS", "zero")
    assert run(["gen", "zipf", "--q", "2"], capsys)[0] == 2


def test_library_errors_exit_1(tmp_path, capsys):
    path = tmp_path / "j.json"
    path.write_text(json.dumps({"n": 2, "q": 2, "probs": [0.1, 0.2, 0.3, 0.4]}))
    code, _, err = run(["solve", "exact-product", "--input", str(path)], capsys)
    assert code == 1
    assert "NotDecomposable" in err
    path.write_text(json.dumps({"n": 2, "q": 2, "probs": [0.5, 0.5, 0.5, 0.5]}))
    assert run(["solve", "bb", "--input", str(path)], capsys)[0] == 1
    assert run(["solve", "bb", "--input", str(path), "--renormalize"], capsys)[0] == 0


def test_threads_recorded(tmp_path, capsys):
    out = tmp_path / "z.json"
    assert dispatch(["--threads", "3", "gen", "zipf", "--q", "3", "--out", str(out)]) == 0
    assert json.loads((tmp_path / "z.json.manifest.json").read_text())["threads"] == 3


def test_app_bss_csv(tmp_path, capsys):
    csv_path = tmp_path / "bss.csv"
    code, _, _ = run(["app", "bss", "--q", "2", "--q-max", "3", "--emit-csv", str(csv_path)], capsys)
    assert code == 0
    assert len(csv_path.read_text().splitlines()) == 3


def test_app_block_coding_small(tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    code, out, _ = run(["app", "block-coding", "--N", "5000", "--bits", "15", "--blocks", "3", "--iters", "3",
                        "--k", "4", "--naive-trials", "5", "--emit-trace", str(trace)], capsys)
    assert code == 0
    assert len(trace.read_text().splitlines()) == 5


def test_app_codebook(tmp_path, capsys):
    table = tmp_path / "freq.json"
    table.write_text(json.dumps(np.random.default_rng(0).integers(1, 100, 256).tolist()))
    code, out, _ = run(["app", "codebook", "--table", str(table), "--k", "4"], capsys)
    assert code == 0
    s = summary(out)
    assert float(s["joint_entropy"]) <= float(s["sum_marginals_found"]) + 1e-9


def test_verify_bounds(scrambled, capsys):
    code, out, _ = run(["verify", "bounds", "--input", str(scrambled), "--k", "4"], capsys)
    assert code == 0
    assert "bounds: ok" in out


def test_entry_point_help():
    r = subprocess.run([sys.executable, "-m", "finita", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "solve" in r.stdout


def test_verify_counts_reports_each_family(capsys):
    code, out, _ = run(["verify", "counts", "--n-max", "5"], capsys)
    lines = out.splitlines()
    assert all(line.endswith("ok") for line in lines if line.startswith(("banded", "block-iid")))
    markov = [line for line in lines if line.startswith("markov")]
    assert len(markov) == 9
    # the exit code follows the honest per-line verdicts
    assert code == (0 if all(line.endswith("ok") for line in lines) else 1)
