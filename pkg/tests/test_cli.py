import json
import math
import subprocess
import sys

import numpy as np
import pytest

from debiased_lasso.cli import main
from debiased_lasso.inference import InferenceReport
from debiased_lasso.model import CovarianceSpec, GaussianNoise, random_support, sample_problem
from debiased_lasso.serialize import read_report, write_dataset_csv, write_report


@pytest.fixture(scope="module")
def synthetic(tmp_path_factory):
    d = tmp_path_factory.mktemp("syn")
    truth = random_support(50, 3, 1.0, seed=21)
    prob = sample_problem(CovarianceSpec.circulant(50), truth, 200, GaussianNoise(1.0), seed=21)
    write_dataset_csv(prob.X, prob.Y, d / "data.csv")
    return d, truth


def _flat_report(p, pvals, alpha=0.05):
    z = np.zeros(p)
    pvals = np.asarray(pvals, dtype=float)
    return InferenceReport(alpha, "jm", 1.0, z + 0.1, z + 0.05, z, z + 0.2, pvals,
                           np.minimum(1, p * pvals), pvals <= alpha, pvals <= alpha / p)


def test_infer_rejects_exactly_the_support(synthetic, capsys):
    d, truth = synthetic
    out = d / "report.json"
    assert main(["infer", "--x", str(d / "data.csv"), "--y-col", "y", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    fwer = [c["index"] for c in doc["coords"] if c["reject_fwer"]]
    assert fwer == sorted(truth.support.tolist())
    assert "3 at alpha/p" in capsys.readouterr().out


def test_infer_is_byte_deterministic(synthetic):
    d, _ = synthetic
    args = ["infer", "--x", str(d / "data.csv"), "--y-col", "y", "--seed", "5", "--out"]
    main(args + [str(d / "a.json")])
    main(args + [str(d / "b.json")])
    assert (d / "a.json").read_bytes() == (d / "b.json").read_bytes()


@pytest.mark.parametrize("method", ["nodewise", "nongaussian"])
def test_infer_other_methods(synthetic, method):
    d, truth = synthetic
    out = d / f"{method}.csv"
    assert main(["infer", "--x", str(d / "data.csv"), "--y-col", "y", "--method", method,
                 "--format", "csv", "--out", str(out)]) == 0
    rep = read_report(out)
    assert rep.method == method
    assert set(np.flatnonzero(rep.reject_fwer)) == set(truth.support.tolist())


def test_alpha_zero_is_usage_error(synthetic):
    d, _ = synthetic
    with pytest.raises(SystemExit) as exc:
        main(["infer", "--x", str(d / "data.csv"), "--y-col", "y", "--alpha", "0",
              "--out", str(d / "x.json")])
    assert exc.value.code == 2


def test_missing_file_is_usage_error(tmp_path):
    assert main(["infer", "--x", str(tmp_path / "nope.csv"), "--y-col", "y",
                 "--out", str(tmp_path / "r.json")]) == 2


def test_dimension_mismatch_exit_3(tmp_path):
    (tmp_path / "x.csv").write_text("1,2\n3,4\n5,6\n")
    (tmp_path / "y.csv").write_text("1\n2\n")
    assert main(["infer", "--x", str(tmp_path / "x.csv"), "--y", str(tmp_path / "y.csv"),
                 "--out", str(tmp_path / "r.json")]) == 3


def test_numerical_failure_exit_4(tmp_path, capsys):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 5))
    write_dataset_csv(X, np.ones(30), tmp_path / "d.csv")
    # a constant response is zero after centering: exact fit, no noise level
    assert main(["infer", "--x", str(tmp_path / "d.csv"), "--y-col", "y",
                 "--out", str(tmp_path / "r.json")]) == 4
    assert "stage 'noise'" in capsys.readouterr().err


def test_nodewise_failure_names_debias_stage(tmp_path, capsys):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((40, 6))
    X[:, 2] = 0.0
    write_dataset_csv(X, X[:, 0] + rng.standard_normal(40), tmp_path / "d.csv")
    assert main(["infer", "--x", str(tmp_path / "d.csv"), "--y-col", "y", "--method", "nodewise",
                 "--out", str(tmp_path / "r.json")]) == 4
    assert "stage 'debias'" in capsys.readouterr().err


def test_plotdata_round_trip(synthetic):
    d, _ = synthetic
    rep_path = d / "rt.json"
    main(["infer", "--x", str(d / "data.csv"), "--y-col", "y", "--out", str(rep_path)])
    out = d / "forest.csv"
    assert main(["plotdata", "--report", str(rep_path), "--kind", "forest",
                 "--out", str(out)]) == 0
    rep = read_report(rep_path)
    rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
    for r in rows:
        assert float(r[2]) == rep.estimate[int(r[0])]


def test_manhattan_threshold_p4088(tmp_path):
    write_report(_flat_report(4088, np.full(4088, 0.5)), tmp_path / "r.json")
    main(["plotdata", "--report", str(tmp_path / "r.json"), "--kind", "manhattan",
          "--out", str(tmp_path / "m.csv")])
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "index,name,neg_log10_p,bonferroni_threshold"
    assert len(lines) == 4089
    thr = float(lines[1].split(",")[3])
    assert thr == pytest.approx(-math.log10(0.05 / 4088))
    assert thr == pytest.approx(4.91254, abs=5e-6)


def test_manhattan_all_ones(tmp_path):
    write_report(_flat_report(6, np.ones(6)), tmp_path / "r.json")
    main(["plotdata", "--report", str(tmp_path / "r.json"), "--kind", "manhattan",
          "--out", str(tmp_path / "m.csv")])
    vals = [line.split(",")[2] for line in (tmp_path / "m.csv").read_text().splitlines()[1:]]
    assert all(float(v) == 0.0 for v in vals)


def test_forest_top_k_with_ties(tmp_path):
    pv = np.linspace(0.9, 0.01, 50)
    pv[[3, 7, 30]] = 0.001  # three-way tie at the top
    write_report(_flat_report(50, pv), tmp_path / "r.json")
    main(["plotdata", "--report", str(tmp_path / "r.json"), "--kind", "forest",
          "--out", str(tmp_path / "f.csv")])
    rows = [line.split(",") for line in (tmp_path / "f.csv").read_text().splitlines()[1:]]
    assert len(rows) == 10
    assert [int(r[0]) for r in rows[:3]] == [3, 7, 30]
    p_sorted = [float(r[5]) for r in rows]
    assert p_sorted == sorted(p_sorted)


def test_plotdata_malformed_report(tmp_path):
    (tmp_path / "r.json").write_text('{"coords": 3}')
    assert main(["plotdata", "--report", str(tmp_path / "r.json"), "--kind", "forest",
                 "--out", str(tmp_path / "f.csv")]) == 2


def _grid(tmp_path):
    path = tmp_path / "grid.toml"
    path.write_text("[defaults]\nrealizations = 3\nseed = 4\n\n"
                    "[[config]]\nn = 120\np = 40\ns0 = 3\nb = 1.0\n\n"
                    "[[config]]\nn = 100\np = 40\ns0 = 0\nb = 1.0\n")
    return path


def test_simulate_workers_identical_bytes(tmp_path):
    grid = _grid(tmp_path)
    assert main(["simulate", "--grid", str(grid), "--out", str(tmp_path / "w1"),
                 "--workers", "1"]) == 0
    assert main(["simulate", "--grid", str(grid), "--out", str(tmp_path / "w8"),
                 "--workers", "8"]) == 0
    assert (tmp_path / "w1" / "results.csv").read_bytes() == \
        (tmp_path / "w8" / "results.csv").read_bytes()


def test_simulate_failure_exit_5(tmp_path, capsys):
    path = tmp_path / "grid.toml"
    path.write_text("[[config]]\nn = 100\np = 30\ns0 = 2\nb = 1.0\nrealizations = 2\n"
                    "timeout = 1e-9\n")
    assert main(["simulate", "--grid", str(path), "--out", str(tmp_path / "o")]) == 5
    assert "FAILED" in capsys.readouterr().err


def test_simulate_bad_grid_exit_2(tmp_path):
    path = tmp_path / "grid.toml"
    path.write_text("[[config]]\nn = 'many'\n")
    assert main(["simulate", "--grid", str(path), "--out", str(tmp_path / "o")]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "debiased_lasso.cli", "plotdata", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "--kind" in proc.stdout
