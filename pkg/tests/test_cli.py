import csv
import subprocess
import sys

import numpy as np
import pytest

from plusreg.cli import main
from plusreg.design import standardize
from plusreg.kkt import rescaled_kkt_report
from plusreg.path import read_path_csv
from plusreg.penalty import make_scad


def write_table(path, X, y=None, names=None):
    p = X.shape[1]
    names = names or [f"x{j + 1}" for j in range(p)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + (["y"] if y is not None else []))
        for i in range(X.shape[0]):
            w.writerow([repr(float(v)) for v in X[i]] + ([repr(float(y[i]))] if y is not None else []))
    return str(path)


def read_fit(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def table(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 6)) * [1.0, 3.0, 0.5, 1.0, 2.0, 1.0]
    y = X[:, 0] * 2.0 - X[:, 1] + 0.3 * rng.standard_normal(40)
    return write_table(tmp_path / "d.csv", X, y), X, y


def test_fit_writes_one_row_per_covariate(table, tmp_path, capsys):
    data, X, _ = table
    out = tmp_path / "fit.csv"
    assert main(["fit", "--data", data, "--response", "y", "--penalty", "mcp", "--gamma", "3",
                 "--lambda", "0.2", "--out", str(out)]) == 0
    rows = read_fit(out)
    assert [r["variable"] for r in rows] == [f"x{j}" for j in range(1, 7)]
    assert "kkt_satisfied = True" in capsys.readouterr().out


def test_fit_universal_level(table, tmp_path, capsys):
    data, _, _ = table
    out = tmp_path / "fit.csv"
    assert main(["fit", "--data", data, "--response", "y", "--penalty", "scad", "--gamma", "3.7",
                 "--lambda-universal", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "sigma_hat = " in text
    assert {r["variable"] for r in read_fit(out) if r["active"] == "1"} >= {"x1", "x2"}


def test_noiseless_roundtrip_on_raw_scale(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((50, 5)) * [2.0, 0.5, 1.0, 4.0, 1.0]
    beta = np.array([1.5, 0.0, -2.0, 0.0, 0.0])
    data = write_table(tmp_path / "d.csv", X, X @ beta)
    out = tmp_path / "fit.csv"
    assert main(["fit", "--data", data, "--response", "y", "--penalty", "mcp", "--gamma", "3",
                 "--lambda", "0.05", "--out", str(out)]) == 0
    got = np.array([float(r["coefficient"]) for r in read_fit(out)])
    np.testing.assert_allclose(got, beta, atol=1e-4)


def test_path_export_satisfies_kkt(table, tmp_path, capsys):
    data, X, y = table
    out = tmp_path / "path.csv"
    assert main(["path", "--data", data, "--response", "y", "--penalty", "scad", "--gamma", "3.7",
                 "--out", str(out)]) == 0
    assert "termination = fit" in capsys.readouterr().out
    d = standardize(X)
    with open(out) as fh:
        rows = read_path_csv(fh, d.p)
    pen = make_scad(3.7)
    for _, tau, _, b in rows:
        if tau > 0:
            assert rescaled_kkt_report(d.gram, d.z_star(y), b, tau, pen, tol=1e-8).satisfied


def test_simulate_and_plot(tmp_path):
    metrics = tmp_path / "m.csv"
    assert main(["simulate", "--n", "30", "--p", "6", "--d-o", "2", "--beta-star", "1.5", "--gamma", "3.7",
                 "--replications", "2", "--grid", "0.5,1.0,2.0", "--methods", "mcp",
                 "--out", str(metrics)]) == 0
    lines = metrics.read_text().splitlines()
    assert lines[0].startswith("method,lambda_ratio,mean_me")
    assert len(lines) == 4

    two = tmp_path / "two.csv"
    assert main(["simulate", "--n", "30", "--p", "6", "--d-o", "2", "--beta-star", "1.5", "--gamma", "3.7",
                 "--replications", "2", "--grid", "0.5,1.0,2.0", "--methods", "lasso,mcp",
                 "--out", str(two)]) == 0
    svg1, svg2 = tmp_path / "a.svg", tmp_path / "b.svg"
    assert main(["plot", "--metrics", str(two), "--out", str(svg1)]) == 0
    assert main(["plot", "--metrics", str(two), "--out", str(svg2)]) == 0
    text = svg1.read_text()
    assert text.count("<polyline") == 2
    assert text.count("<line") == 1
    assert svg1.read_bytes() == svg2.read_bytes()


def test_simulate_config_file_and_seed_env(tmp_path, monkeypatch):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("n = 30\np = 6\nd_o = 2\nbeta_star = 1.5\ngamma = 3.7\nreplications = 2\n"
                   "lambda_grid = 1.0\nmethods = mcp\nseed = 1\n")
    outs = []
    for seed in ("5", "5", "6"):
        monkeypatch.setenv("PLUS_SEED", seed)
        out = tmp_path / f"m{len(outs)}.csv"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(out.read_text())
    assert outs[0] == outs[1] != outs[2]


def test_diagnose_duplicated_columns(tmp_path, capsys):
    rng = np.random.default_rng(2)
    X = rng.standard_normal((20, 4))
    X[:, 3] = X[:, 0]
    data = write_table(tmp_path / "d.csv", X)
    assert main(["diagnose", "--data", data, "--penalty", "mcp", "--gamma", "50", "--dstar", "2"]) == 0
    out = capsys.readouterr().out
    assert "sparse_convexity = False" in out
    assert "sparse_riesz_c_lower = 0.0" in out


def test_missing_file_and_usage_errors(tmp_path, capsys):
    assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--response", "y", "--lambda", "1",
                 "--out", str(tmp_path / "o.csv")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--data", "x.csv"])
    assert exc.value.code == 1
    assert main(["plot", "--metrics", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o.svg")]) == 1


def test_data_errors_exit_two(tmp_path):
    X = np.ones((5, 2))
    X[:, 1] = 0.0
    data = write_table(tmp_path / "d.csv", X, np.arange(5.0))
    assert main(["fit", "--data", data, "--response", "y", "--lambda", "1",
                 "--out", str(tmp_path / "o.csv")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("a,y\n1,2\nfoo,3\n")
    assert main(["fit", "--data", str(bad), "--response", "y", "--lambda", "1",
                 "--out", str(tmp_path / "o.csv")]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "plusreg", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "simulate" in res.stdout
