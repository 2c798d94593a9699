"""End-to-end CLI behavior: exit codes, JSON round trips, determinism."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from slope.cli import main
from slope.simulate import make_regression


@pytest.fixture()
def dataset(tmp_path):
    X, y, _ = make_regression(40, 6, k=2, rho=0.3, seed=1)
    path = tmp_path / "d.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(6)] + ["y"])
        for i in range(40):
            w.writerow(list(X[i]) + [repr(float(y[i]))])
    return path, X, y


def run_cli(args, capsys):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


class TestExitCodes:
    def test_happy_path(self, dataset, tmp_path, capsys):
        path, _, _ = dataset
        out_file = tmp_path / "out.json"
        code, out, err = run_cli(
            ["path", "--data", path, "--response", "y", "--loss", "gaussian",
             "--q", "0.4", "--path-length", "10", "--output", out_file], capsys)
        assert code == 0
        doc = json.loads(out_file.read_text())
        assert doc["schema"] == 1
        assert doc["command"] == "path"
        assert len(doc["steps"]) >= 2

    def test_usage_error(self, capsys):
        code, out, err = run_cli(["fit"], capsys)
        assert code == 1
        assert "usage" in err.lower()

    def test_data_error(self, tmp_path, capsys):
        code, out, err = run_cli(
            ["fit", "--data", tmp_path / "missing.csv", "--response", "y",
             "--alpha", "1"], capsys)
        assert code == 2

    def test_mutually_exclusive(self, dataset, capsys):
        path, _, _ = dataset
        code, out, err = run_cli(
            ["path", "--data", path, "--response", "y",
             "--alphas", "x.txt", "--path-length", "5"], capsys)
        assert code == 1

    def test_strict_non_convergence(self, dataset, tmp_path, capsys):
        path, _, _ = dataset
        code, out, err = run_cli(
            ["fit", "--data", path, "--response", "y", "--alpha", "0.001",
             "--tol", "1e-14", "--max-iter", "2", "--strict",
             "--output", tmp_path / "o.json"], capsys)
        assert code == 3

    def test_bad_response_column(self, dataset, capsys):
        path, _, _ = dataset
        code, out, err = run_cli(
            ["fit", "--data", path, "--response", "nope", "--alpha", "0.1"],
            capsys)
        assert code == 2


class TestStdout:
    def test_stdout_carries_only_data(self, dataset, capsys):
        path, _, _ = dataset
        code, out, err = run_cli(
            ["fit", "--data", path, "--response", "y", "--alpha", "0.1",
             "--output", "-"], capsys)
        assert code == 0
        json.loads(out)  # parses cleanly: nothing but the document


class TestRoundTrip:
    def test_path_json_primal_reproducible(self, dataset, tmp_path, capsys):
        path, X, y = dataset
        out_file = tmp_path / "p.json"
        code, _, _ = run_cli(
            ["path", "--data", path, "--response", "y", "--q", "0.2",
             "--path-length", "8", "--tol", "1e-8", "--output", out_file],
            capsys)
        assert code == 0
        doc = json.loads(out_file.read_text())

        from slope import Family, LambdaSequence, make_lambda, sorted_l1_norm

        fam = Family("gaussian")
        lam = make_lambda("bh", 6, q=0.2)
        for step in doc["steps"]:
            beta = np.zeros(6)
            for j, v in step["beta"]:
                beta[j] = v
            eta = X @ beta + step["intercept"]
            primal = fam.loss(eta, y) / len(y) + step["alpha"] * sorted_l1_norm(beta, lam)
            assert primal == pytest.approx(step["primal"], abs=1e-10)

    def test_fit_outputs(self, dataset, tmp_path, capsys):
        path, X, y = dataset
        out_file = tmp_path / "f.json"
        trace = tmp_path / "trace.csv"
        pattern = tmp_path / "pat.csv"
        code, _, _ = run_cli(
            ["fit", "--data", path, "--response", "y", "--alpha", "0.05",
             "--tol", "1e-8", "--trace", trace, "--pattern", pattern,
             "--output", out_file], capsys)
        assert code == 0
        doc = json.loads(out_file.read_text())
        assert doc["converged"] is True
        rows = trace.read_text().strip().splitlines()
        assert rows[0] == "iteration,primal,dual,gap,step,n_clusters"
        assert len(rows) >= 2
        prows = pattern.read_text().strip().splitlines()
        assert prows[0] == "coefficient_index,cluster_id,magnitude,sign"
        assert len(prows) == 7  # one per coefficient

    def test_plot_data(self, dataset, tmp_path, capsys):
        path, _, _ = dataset
        plot = tmp_path / "plot.csv"
        code, _, _ = run_cli(
            ["path", "--data", path, "--response", "y", "--q", "0.2",
             "--path-length", "8", "--plot-data", plot,
             "--output", tmp_path / "p.json"], capsys)
        assert code == 0
        rows = plot.read_text().strip().splitlines()
        assert rows[0] == "step,alpha,coefficient_index,value"
        assert len(rows) > 3


class TestDeterminism:
    def test_cv_byte_identical(self, dataset, tmp_path, capsys):
        path, _, _ = dataset
        docs = []
        for run in range(2):
            out_file = tmp_path / f"cv{run}.json"
            code, _, _ = run_cli(
                ["cv", "--data", path, "--response", "y", "--q", "0.1,0.2",
                 "--seed", "48", "--folds", "4", "--path-length", "6",
                 "--alpha-min-ratio", "0.1", "--output", out_file], capsys)
            assert code == 0
            docs.append(out_file.read_bytes())
        assert docs[0] == docs[1]

    def test_cv_threads_byte_identical(self, dataset, tmp_path, capsys):
        path, _, _ = dataset
        docs = []
        for threads in (1, 8):
            out_file = tmp_path / f"cvt{threads}.json"
            code, _, _ = run_cli(
                ["cv", "--data", path, "--response", "y", "--q", "0.2",
                 "--gamma", "0.0,1.0", "--seed", "48", "--folds", "4",
                 "--threads", threads, "--path-length", "6",
                 "--alpha-min-ratio", "0.1", "--output", out_file], capsys)
            assert code == 0
            docs.append(out_file.read_bytes())
        assert docs[0] == docs[1]


class TestLibsvm:
    def test_sparse_input(self, tmp_path, capsys):
        r = np.random.default_rng(4)
        n, p = 30, 5
        X = r.normal(size=(n, p)) * (r.random((n, p)) < 0.5)
        y = X @ np.array([1.5, -1.0, 0, 0, 0]) + 0.1 * r.normal(size=n)
        svm = tmp_path / "d.svm"
        with open(svm, "w") as fh:
            for i in range(n):
                feats = " ".join(f"{j + 1}:{float(X[i, j])!r}"
                                 for j in range(p) if X[i, j] != 0)
                fh.write(f"{float(y[i])!r} {feats}\n")
        out_file = tmp_path / "o.json"
        code, _, _ = run_cli(
            ["fit", "--data", svm, "--alpha", "0.05", "--tol", "1e-8",
             "--output", out_file], capsys)
        assert code == 0
        doc = json.loads(out_file.read_text())
        assert doc["p"] == 5
        assert doc["converged"]

        # dense CSV of the same data gives the same coefficients
        dcsv = tmp_path / "d.csv"
        with open(dcsv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(p)] + ["y"])
            for i in range(n):
                w.writerow([repr(float(v)) for v in X[i]]
                           + [repr(float(y[i]))])
        out2 = tmp_path / "o2.json"
        code, _, _ = run_cli(
            ["fit", "--data", dcsv, "--response", "y", "--alpha", "0.05",
             "--tol", "1e-8", "--output", out2], capsys)
        assert code == 0
        doc2 = json.loads(out2.read_text())
        assert doc["beta"] == doc2["beta"]


class TestEntryPoint:
    def test_console_script(self, dataset, tmp_path):
        path, _, _ = dataset
        out_file = tmp_path / "o.json"
        proc = subprocess.run(
            [sys.executable, "-m", "slope.cli", "fit", "--data", str(path),
             "--response", "y", "--alpha", "0.1", "--output", str(out_file)],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert json.loads(out_file.read_text())["schema"] == 1
