import csv
import json

import numpy as np
import pytest

from survcop import cli
from survcop import copulas as C
from survcop.errors import NonFiniteError

FAST = {"mstop": {"margin1": 60, "margin2": 60, "copula": 60, "joint": 80}}


def run(*argv):
    return cli.main([str(a) for a in argv])


def _config(tmp_path, name="cfg.json", **extra):
    cfg = dict(FAST, **extra)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def _read_csv(path):
    with open(path) as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {h: body[:, j] for j, h in enumerate(header)}


@pytest.fixture(scope="module")
def bte_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("bte")
    data = d / "data.csv"
    assert run("simulate", "--scenario", "bte-linear", "--n", 400, "--p", 5, "--seed", 3, "--out", data) == 0
    return d, data


def test_simulate_report(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert run("simulate", "--scenario", "bte-linear", "--censoring", "heavy", "--n", 4000, "--p", 4,
               "--seed", 1, "--out", out) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["censoring_rate_1"] == pytest.approx(0.70, abs=0.04)
    assert rep["censoring_rate_2"] == pytest.approx(0.70, abs=0.04)
    header = _read_csv(out)
    assert list(header) == ["time1", "status1", "time2", "status2", "x1", "x2", "x3", "x4"]
    truth = json.loads((tmp_path / "s.csv.truth.json").read_text())
    assert truth["format"] == "survcop-truth/1"


def test_simulate_scr_columns(tmp_path, capsys):
    out = tmp_path / "scr.csv"
    assert run("simulate", "--scenario", "scr", "--p", 10, "--n", 1000, "--seed", 7, "--out", out) == 0
    rep = json.loads(capsys.readouterr().out)
    assert len(_read_csv(out)) == 14
    assert rep["n"] == 1000 and rep["p"] == 10


def test_simulate_custom_uncorrelated(tmp_path, capsys):
    cfg = tmp_path / "sc.json"
    cfg.write_text(json.dumps({"copula": "frank", "coefficients": {"copula": {"(Intercept)": 3.0}}}))
    assert run("simulate", "--scenario", "custom", "--config", cfg, "--rho", 0, "--n", 5000, "--p", 4,
               "--out", tmp_path / "c.csv") == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["mean_abs_covariate_correlation"] < 0.03
    assert rep["censoring_rate_1"] == 0.0


def test_invalid_inputs_exit_2(tmp_path, bte_files, capsys):
    _, data = bte_files
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"margins": ["WEIBULL", "LOGLOGISTIC"], "colour": "red"}))
    assert run("fit", "--data", data, "--config", bad, "--out", tmp_path / "m.json") == 2
    assert "colour" in capsys.readouterr().err
    bad.write_text(json.dumps({"copula": "frank90"}))
    assert run("fit", "--data", data, "--config", bad, "--out", tmp_path / "m.json") == 2
    broken = tmp_path / "broken.csv"
    broken.write_text("time1,status1,time2,status2\n1,1,2,1\n1,1,-2,1\n")
    assert run("fit", "--data", broken, "--out", tmp_path / "m.json") == 2
    assert "broken.csv:3" in capsys.readouterr().err
    assert run("simulate", "--scenario", "custom", "--out", tmp_path / "x.csv") == 2
    assert run("fit", "--data", tmp_path / "missing.csv", "--out", tmp_path / "m.json") == 2


def test_threads_variable_validated(monkeypatch, bte_files, tmp_path):
    _, data = bte_files
    monkeypatch.setenv("SURVCOP_THREADS", "zero")
    assert run("fit", "--data", data, "--out", tmp_path / "m.json") == 2


def test_numeric_failure_exit_3(monkeypatch, bte_files, tmp_path):
    _, data = bte_files

    def boom(*a, **k):
        raise NonFiniteError("risk is not finite", np.array([4]))

    monkeypatch.setattr(cli, "fit", boom)
    assert run("fit", "--data", data, "--config", _config(tmp_path), "--out", tmp_path / "m.json") == 3


def test_refit_byte_identical(tmp_path, bte_files):
    _, data = bte_files
    cfg = _config(tmp_path)
    outs = []
    for k in range(2):
        m, r = tmp_path / f"m{k}.json", tmp_path / f"r{k}.json"
        assert run("fit", "--data", data, "--config", cfg, "--out", m, "--report", r,
                   "--split", "0.5,0.25,0.25", "--seed", 9) == 0
        outs.append((m.read_bytes(), r.read_bytes()))
    assert outs[0] == outs[1]
    report = json.loads(outs[0][1])
    for row in report["parameters"].values():
        assert row["n_selected"] == len(row["selected"])


def test_independence_joint_is_product(tmp_path, bte_files):
    _, data = bte_files
    cfg = _config(tmp_path, copula="independence")
    m, pred = tmp_path / "m.json", tmp_path / "p.csv"
    assert run("fit", "--data", data, "--config", cfg, "--out", m) == 0
    assert run("predict", "--model", m, "--data", data, "--times", "0.5,2", "--out", pred) == 0
    cols = _read_csv(pred)
    for a in ("0.5", "2.0"):
        for b in ("0.5", "2.0"):
            np.testing.assert_allclose(cols[f"S12_t{a}_t{b}"], cols[f"S1_t{a}"] * cols[f"S2_t{b}"],
                                       rtol=0, atol=1e-12)
    assert np.all(cols["kendall_tau"] == 0)


def test_tau_column_recomputed(tmp_path, bte_files):
    _, data = bte_files
    cfg = _config(tmp_path, copula={"family": "gumbel", "rotation": 180})
    m, pred = tmp_path / "m.json", tmp_path / "p.csv"
    assert run("fit", "--data", data, "--config", cfg, "--out", m) == 0
    assert run("predict", "--model", m, "--data", data, "--times", "1", "--out", pred) == 0
    cols = _read_csv(pred)
    fam = C.CopulaFamily.parse("gumbel180")
    np.testing.assert_allclose(cols["kendall_tau"], C.kendall_tau(fam, cols["theta_copula"]), rtol=1e-15)
    np.testing.assert_allclose(cols["theta_copula"], C.response(fam, cols["eta_copula"]), rtol=1e-15)
    assert open(pred).readline().startswith("# model WEIBULL/LOGLOGISTIC/GUMBEL180")


def test_constant_model_identical_rows(tmp_path):
    data = tmp_path / "d.csv"
    rows = ["time1,status1,time2,status2,x1"] + [f"{1 + k % 5},1,{2 + k % 3},{k % 2},0.5" for k in range(40)]
    data.write_text("\n".join(rows) + "\n")
    m, pred = tmp_path / "m.json", tmp_path / "p.csv"
    assert run("fit", "--data", data, "--config", _config(tmp_path), "--out", m) == 0
    assert run("predict", "--model", m, "--data", data, "--times", "1,3", "--out", pred) == 0
    cols = _read_csv(pred)
    for k, v in cols.items():
        if k != "row":
            assert np.all(v == v[0]), k


def test_predict_schema_mismatch(tmp_path, bte_files):
    _, data = bte_files
    m = tmp_path / "m.json"
    assert run("fit", "--data", data, "--config", _config(tmp_path), "--out", m) == 0
    other = tmp_path / "other.csv"
    other.write_text("time1,status1,time2,status2,z\n1,1,1,1,0\n")
    assert run("predict", "--model", m, "--data", other, "--times", "1", "--out", tmp_path / "p.csv") == 2
    assert run("predict", "--model", m, "--data", data, "--times", "-1", "--out", tmp_path / "p.csv") == 2


@pytest.mark.parametrize("scenario,mode", [("scr", "scr"), ("bte-linear", "bte"), ("bte-nonlinear", "bte")])
def test_pipeline(tmp_path, capsys, scenario, mode):
    data = tmp_path / "d.csv"
    assert run("simulate", "--scenario", scenario, "--n", 300, "--p", 4, "--seed", 2, "--out", data) == 0
    cfg = _config(tmp_path, mode=mode, split=[0.5, 0.25, 0.25])
    m = tmp_path / "m.json"
    assert run("fit", "--data", data, "--config", cfg, "--out", m) == 0
    assert run("predict", "--model", m, "--data", data, "--times", "0.5,1", "--out", tmp_path / "p.csv") == 0
    capsys.readouterr()
    assert run("evaluate", "--model", m, "--data", data, "--truth", str(data) + ".truth.json",
               "--test-split", "--out", tmp_path / "e.json") == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep == json.loads((tmp_path / "e.json").read_text())
    assert rep["n"] == 75
    assert set(rep["margins"]) == {"margin1", "margin2"}
    for v in rep["margins"].values():
        assert v["ise"] is not None and v["ise"] >= 0


def test_evaluate_without_stored_split(tmp_path, bte_files):
    _, data = bte_files
    m = tmp_path / "m.json"
    assert run("fit", "--data", data, "--config", _config(tmp_path), "--out", m) == 0
    assert run("evaluate", "--model", m, "--data", data, "--test-split") == 2
    assert run("evaluate", "--model", m, "--data", data) == 0


def test_scan_single_candidates(tmp_path, bte_files, capsys):
    _, data = bte_files
    out = tmp_path / "scan.json"
    assert run("scan", "--data", data, "--config", _config(tmp_path), "--margins", "WEIBULL",
               "--copulas", "gumbel", "--out", out) == 0
    table = json.loads(out.read_text())["table"]
    copula_rows = [r for r in table if r["stage"] == "copula"]
    assert len(copula_rows) == 1 and copula_rows[0]["family"] == "GUMBEL"
    for ev in (1, 2):
        rows = [r for r in table if r["event"] == ev]
        assert len(rows) == 1 and rows[0]["rank"] == 1
    text = capsys.readouterr().out
    assert "log-score" in text.splitlines()[0]


def test_scan_requires_three_way_split(tmp_path, bte_files):
    _, data = bte_files
    assert run("scan", "--data", data, "--split", "0.5,0.5", "--margins", "WEIBULL",
               "--copulas", "gumbel") == 2
