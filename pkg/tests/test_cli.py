import csv
import json

import numpy as np
import pytest

from arealinterp.cli import main
from arealinterp.config import SCHEMA_VERSION, default_config_path
from arealinterp.field import CountField, read_counts, write_field
from arealinterp.grid import GridRegion, build_zone_system, write_labels

LAYOUTS = default_config_path("toy1").parent.parent / "layouts"


@pytest.fixture
def workspace(tmp_path):
    g = GridRegion(2, 4)
    write_labels(build_zone_system(g, ["A", "A", "B", "B", "C", "C", "D", "D"]), tmp_path / "src.csv")
    write_labels(build_zone_system(g, ["t", "u", "t", "u", "t", "u", "t", "u"], "target"), tmp_path / "tgt.csv")
    write_field(CountField(g, [3, 9, 1, 4, 8, 2, 6, 0]), tmp_path / "x.csv")
    write_field(CountField(g, [5, 14, 3, 6, 12, 4, 9, 2]), tmp_path / "y.csv")
    return tmp_path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_is_seeded(workspace):
    w = workspace
    args = ["simulate", "--aux", str(w / "x.csv"), "--alpha", "2", "--betas", "1", "--seed", "4",
            "--out", str(w / "sim1.csv")]
    assert main(args) == 0
    assert main(args[:-1] + [str(w / "sim2.csv"), "--svg", str(w / "sim.svg")]) == 0
    assert (w / "sim1.csv").read_bytes() == (w / "sim2.csv").read_bytes()
    assert (w / "sim.svg").read_text().startswith("<svg")
    assert read_counts(w / "sim1.csv").region == GridRegion(2, 4)
    assert main(["simulate", "--out", str(w / "s.csv")]) == 2


def test_fit_and_predict(workspace):
    w = workspace
    assert main(["fit", "--sources", str(w / "src.csv"), "--counts", str(w / "y.csv"),
                 "--aux", str(w / "x.csv"), "--out", str(w / "fit.json")]) == 0
    doc = json.loads((w / "fit.json").read_text())
    assert doc["converged"] and len(doc["gamma_hat"]) == 2 and len(doc["std_errors"]) == 2
    common = ["--sources", str(w / "src.csv"), "--targets", str(w / "tgt.csv"), "--counts", str(w / "y.csv"),
              "--aux", str(w / "x.csv")]
    y_src = np.array([19.0, 9.0, 16.0, 11.0])
    for method, extra in (("DAW", []), ("DAX", []), ("COMPOSITE", ["--alpha", "2", "--betas", "1"]),
                          ("REG", ["--fit", str(w / "fit.json")]), ("SCR", [])):
        out = w / f"{method}.csv"
        assert main(["predict", "--method", method, *common, *extra, "--out", str(out),
                     "--target-out", str(w / f"{method}_t.csv")]) == 0, method
        rows = _rows(out)
        assert {r["method"] for r in rows} == {method} and len(rows) == 8
        total = sum(float(r["value"]) for r in _rows(w / f"{method}_t.csv"))
        assert total == pytest.approx(y_src.sum())
    daw = {(r["source_id"], r["target_id"]): float(r["value"]) for r in _rows(w / "DAW.csv")}
    assert daw[("A", "t")] == pytest.approx(9.5)


def test_predict_with_source_counts_and_svg(workspace):
    w = workspace
    (w / "sc.csv").write_text("source_id,count\nA,19\nB,9\nC,16\nD,11\n")
    assert main(["predict", "--method", "dax", "--sources", str(w / "src.csv"), "--source-counts",
                 str(w / "sc.csv"), "--aux", str(w / "x.csv"), "--out", str(w / "p.csv"),
                 "--svg", str(w / "p.svg")]) == 0
    vals = [float(r["value"]) for r in _rows(w / "p.csv")]
    np.testing.assert_allclose(vals, [19 * 3 / 12, 19 * 9 / 12, 9 * 1 / 5, 9 * 4 / 5, 16 * 0.8, 16 * 0.2, 11.0, 0.0])
    (w / "bad.csv").write_text("source_id,count\nA,19\n")
    assert main(["predict", "--method", "daw", "--sources", str(w / "src.csv"), "--source-counts",
                 str(w / "bad.csv"), "--out", str(w / "q.csv")]) == 2


def test_exit_codes(workspace):
    w = workspace
    assert main(["fit", "--sources", str(w / "missing.csv"), "--counts", str(w / "y.csv")]) == 2
    # a single source cannot identify two coefficients: numerical failure
    write_labels(build_zone_system(GridRegion(2, 4), ["S"] * 8), w / "one.csv")
    assert main(["fit", "--sources", str(w / "one.csv"), "--counts", str(w / "y.csv"),
                 "--aux", str(w / "x.csv"), "--out", str(w / "f.json")]) == 3
    # both count options given
    assert main(["fit", "--sources", str(w / "src.csv"), "--counts", str(w / "y.csv"),
                 "--source-counts", str(w / "y.csv")]) == 2
    with pytest.raises(SystemExit):
        main(["predict", "--method", "KRIGE", "--sources", "a", "--out", "b"])


def _small_config(tmp_path):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "grid": {"n_rows": 5, "n_cols": 5},
        "sources": {"toy1": str(LAYOUTS / "toy1_sources.csv")},
        "targets": str(LAYOUTS / "toy1_targets.csv"),
        "auxiliary": {"X": {"kind": "file", "path": str(LAYOUTS / "toy1_x.csv")}},
        "params": [{"name": "Y", "alpha": 80, "betas": [1]}],
        "methods": ["DAW", "DAX", "REG"],
        "replicates": 10,
        "base_seed": 3,
        "output_dir": str(tmp_path / "out"),
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path


def test_evaluate(tmp_path, capsys):
    cfg = _small_config(tmp_path)
    assert main(["evaluate", "--config", str(cfg)]) == 0
    report = tmp_path / "out" / "errors_Y_toy1.csv"
    lines = report.read_text().splitlines()
    assert lines[0] == "scope,scope_id,method,bias,variance,mse,relative,std_error,replicates"
    rows = _rows(report)
    assert {r["method"] for r in rows} >= {"DAW", "DAX", "REG"}
    assert any(r["replicates"] == "0" for r in rows) and any(r["replicates"] == "10" for r in rows)
    first = report.read_bytes()
    assert main(["evaluate", "--config", str(cfg), "--workers", "2"]) == 0
    assert report.read_bytes() == first
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": SCHEMA_VERSION}))
    assert main(["evaluate", "--config", str(bad)]) == 2


def test_experiment_subcommand(tmp_path, capsys):
    assert main(["experiment", "toy1", "--replicates", "2", "--out", str(tmp_path)]) == 0
    assert "table1" in capsys.readouterr().out
    assert (tmp_path / "table1.csv").exists()
