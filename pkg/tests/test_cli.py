import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from gammavi import cli
from gammavi.errors import SolverError

EPM_SMALL = ["--model", "epm", "--synth-nodes", "16", "--blocks", "1.5,0.1", "--k", "3",
             "--iters", "30", "--eps", "1e-3"]
GPFA_SMALL = ["--model", "gpfa", "--synth-d", "6", "--synth-k", "2", "--synth-n", "200",
              "--k", "2", "--iters", "30", "--eps", "1e-3"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def elbo_column(path):
    with open(path) as fh:
        return [row["elbo"] for row in csv.DictReader(fh)]


def test_fit_and_eval_epm(tmp_path):
    out = tmp_path / "epm"
    assert run("fit", *EPM_SMALL, "--n-splits", "3", "--out", out) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["layout"].startswith("epm/N=16/K=3")
    assert man["config"]["iters"] == 30 and man["seed"] == 0
    for s in range(3):
        d = out / f"split_{s:02d}"
        assert (d / "qparams.json").exists()
        with open(d / "trace.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iteration", "elbo", "wall_ms"] and len(rows) == 31
    assert run("eval", out, "--samples", "20") == 0
    res = json.loads((out / "metrics.json").read_text())
    assert len(res["auc"]) == 3 and 0 <= res["auc_mean"] <= 1
    assert res["auc_sd"] >= 0 and res["low_precision"] is False


def test_fit_and_eval_gpfa_reports_all_metrics(tmp_path):
    out = tmp_path / "gpfa"
    assert run("fit", *GPFA_SMALL, "--out", out) == 0
    assert run("eval", out, "--samples", "1") == 0
    res = json.loads((out / "metrics.json").read_text())
    assert {"amari", "perplexity_gpfa", "perplexity_empirical", "perplexity_lw"} <= set(res)
    assert res["low_precision"] is True
    cov = np.loadtxt(out / "expected_cov.csv", delimiter=",")
    assert cov.shape == (6, 6) and np.allclose(cov, cov.T)
    assert np.loadtxt(out / "loadings.csv", delimiter=",").shape == (6, 2)


@pytest.mark.parametrize("algo", ["norm_sgvb", "map"])
def test_other_algorithms(tmp_path, algo):
    out = tmp_path / algo
    assert run("fit", *EPM_SMALL, "--algo", algo, "--out", out) == 0
    assert run("eval", out, "--samples", "5") == 0
    assert 0 <= json.loads((out / "metrics.json").read_text())["auc_mean"] <= 1


def test_user_supplied_data_files(tmp_path):
    (tmp_path / "g.tsv").write_text("0\t1\n1\t2\n2\t3\n3\t0\n0\t2\n4\t5\n5\t6\n6\t4\n")
    assert run("fit", "--model", "epm", "--data", tmp_path / "g.tsv", "--k", "2", "--iters", "5",
               "--holdout", "0", "--out", tmp_path / "e") == 0
    np.savetxt(tmp_path / "y.csv", np.random.default_rng(0).normal(size=(30, 4)), delimiter=",")
    assert run("fit", "--model", "gpfa", "--data", tmp_path / "y.csv", "--k", "2", "--iters", "5",
               "--out", tmp_path / "g") == 0
    assert run("eval", tmp_path / "g", "--samples", "3") == 0
    assert "amari" not in json.loads((tmp_path / "g" / "metrics.json").read_text())


def test_missing_data_path_exits_2_naming_flag(tmp_path, capsys):
    assert run("fit", "--data", tmp_path / "nope.tsv", "--out", tmp_path) == 2
    assert "--data" in capsys.readouterr().err


@pytest.mark.parametrize("flags, name", [(["--momentum", "1.5"], "--momentum"),
                                         (["--rho", "-1"], "--rho"), (["--eps", "0"], "--eps"),
                                         (["--k", "0"], "--k"), (["--holdout", "1"], "--holdout"),
                                         (["--blocks", "1.5"], "--blocks")])
def test_config_errors_name_the_flag(tmp_path, capsys, flags, name):
    assert run("fit", *flags, "--out", tmp_path) == 2
    assert name in capsys.readouterr().err


def test_bad_flag_value_is_config_error():
    with pytest.raises(SystemExit) as info:
        run("fit", "--opt", "adam")
    assert info.value.code == 2


def test_numerical_failure_exits_3(tmp_path, monkeypatch, capsys):
    def boom(cfg, model):
        raise SolverError("did not converge")
    monkeypatch.setattr(cli, "run_fit", boom)
    assert run("fit", *EPM_SMALL, "--out", tmp_path) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("GAMMAVI_OUTPUT_DIR", str(tmp_path / "envout"))
    assert run("fit", *GPFA_SMALL, "--iters", "3") == 0
    assert (tmp_path / "envout" / "manifest.json").exists()


def test_manifest_reproduces_run(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("fit", *EPM_SMALL, "--seed", "4", "--out", a) == 0
    assert run("fit", "--config", a / "manifest.json", "--out", b) == 0
    assert (a / "split_00" / "qparams.json").read_bytes() == (b / "split_00" / "qparams.json").read_bytes()
    assert elbo_column(a / "split_00" / "trace.csv") == elbo_column(b / "split_00" / "trace.csv")
    # explicit flags still override the manifest
    c = tmp_path / "c"
    assert run("fit", "--config", a / "manifest.json", "--iters", "7", "--out", c) == 0
    assert json.loads((c / "manifest.json").read_text())["config"]["iters"] == 7


def test_sweep_optimizer_grid(tmp_path):
    path = tmp_path / "sw"
    assert run("sweep", *EPM_SMALL, "--grid", "opt=sgd,adagrad,rmsprop,adadelta",
               "--grid", "momentum=1,0.9", "--out", path, "--jobs", "2") == 0
    with open(path / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    assert {r["opt"] for r in rows} == {"sgd", "adagrad", "rmsprop", "adadelta"}
    assert all(r["error"] == "" and np.isfinite(float(r["smoothed_elbo"])) for r in rows)


def test_sweep_records_failures_in_row(tmp_path):
    assert run("sweep", *EPM_SMALL, "--grid", "rho=0.9,1.5", "--out", tmp_path) == 0
    with open(tmp_path / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["error"] == "" and "rho" in rows[1]["error"]


def test_sweep_empty_grid_writes_header_only(tmp_path):
    assert run("sweep", *EPM_SMALL, "--grid", "opt=", "--out", tmp_path) == 0
    lines = (tmp_path / "results.csv").read_text().splitlines()
    assert lines == ["opt,final_elbo,smoothed_elbo,final_log_joint,wall_s,error"]


def test_sweep_bad_grid_key(tmp_path):
    assert run("sweep", "--grid", "colour=red", "--out", tmp_path) == 2


def test_eval_without_manifest(tmp_path):
    assert run("eval", tmp_path) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gammavi", "fit", *GPFA_SMALL, "--iters", "2",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert os.path.isfile(tmp_path / "trace.csv")


def test_unreadable_data_file_is_config_error(tmp_path, capsys):
    (tmp_path / "bad.tsv").write_text("0 1\nx y\n")
    assert run("fit", "--data", tmp_path / "bad.tsv", "--out", tmp_path) == 2
    assert "--data" in capsys.readouterr().err


def test_eval_layout_mismatch_is_config_error(tmp_path, capsys):
    out = tmp_path / "r"
    assert run("fit", *GPFA_SMALL, "--iters", "2", "--out", out) == 0
    man = json.loads((out / "manifest.json").read_text())
    man["config"]["k"] = 3
    (out / "manifest.json").write_text(json.dumps(man))
    assert run("eval", out) == 2
    assert "layout" in capsys.readouterr().err
