import csv
import io
import json
import os

import numpy as np
import pytest

from wadro import cli
from wadro.measure import canonical_test_measure, to_csv


def run_cli(args):
    return cli.main(args)


def test_bad_config_exit_code(tmp_path):
    rc = run_cli(["curve", "--set", "model.sigma=0.5,0.1", "--out", str(tmp_path)])
    assert rc == cli.EXIT_BAD_CONFIG
    rc = run_cli(["curve", "--set", "nonsense", "--out", str(tmp_path)])
    assert rc == cli.EXIT_BAD_CONFIG
    rc = run_cli(["curve", "--config", str(tmp_path / "missing.cfg")])
    assert rc == cli.EXIT_BAD_CONFIG


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("""
[model]
family = bachelier
sigma = 0.5
n1 = 12
n2 = 12

[criterion]
name = linear:x2

[output]
dir = %s
""" % tmp_path)
    rc = run_cli(["curve", "--config", str(cfg), "--set", "model.sigma=0.1"])
    assert rc == cli.EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "curve.csv")))
    assert len(rows) == 1
    # linear:x2 on a Bachelier grid: unconstrained sensitivity 1, vega 0
    assert abs(float(rows[0]["G_ad"]) - 1.0) <= 1e-10
    assert abs(float(rows[0]["vega"])) <= 1e-12
    # price is 0, so relative columns are empty
    assert rows[0]["relative_G_ad"] == ""


def test_curve_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["curve", "--set", "model.sigma=0.2,0.6", "--set", "model.n1=16",
            "--set", "model.n2=16", "--set", "output.workers=2"]
    assert run_cli(args + ["--out", str(a)]) == cli.EXIT_OK
    assert run_cli(args + ["--out", str(b)]) == cli.EXIT_OK
    for name in ("curve.csv", "curve.svg", "curve.svg.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_curve_relative_columns(tmp_path):
    rc = run_cli(["curve", "--set", "model.sigma=0.5", "--set", "model.n1=16",
                  "--set", "model.n2=16", "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    row = next(csv.DictReader(open(tmp_path / "curve.csv")))
    price = float(row["price"])
    assert price > 0
    for col in ("G_ad", "G_ad_M", "G_ad_m", "G_ad_Mm"):
        assert abs(float(row[f"relative_{col}"]) - float(row[col]) / price) <= 1e-12


def test_svg_sidecar_matches_plot(tmp_path):
    rc = run_cli(["curve", "--set", "model.sigma=0.2,0.4,0.8",
                  "--set", "model.n1=12", "--set", "model.n2=12",
                  "--set", "criterion.name=linear:x2", "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    svg = (tmp_path / "curve.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg
    side = list(csv.reader(open(tmp_path / "curve.svg.csv")))
    header, rows = side[0], side[1:]
    assert "G_ad_x" in header and "G_ad_y" in header
    col = header.index("G_ad_y")
    ys = [float(r[col]) for r in rows]
    assert np.allclose(ys, 1.0, atol=1e-10)


def test_hedge_constant_strategy(tmp_path):
    rc = run_cli(["hedge", "--sigma", "1.0",
                  "--set", "criterion.name=linear:x2",
                  "--set", "constraints.sets=martingale",
                  "--set", "model.n1=12", "--set", "model.n2=12",
                  "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "hedge_h.csv")))
    hvals = np.array([float(r["h"]) for r in rows])
    assert np.allclose(hvals, -0.5, atol=1e-12)


def test_hedge_put_jump_near_boundary(tmp_path, capsys):
    rc = run_cli(["hedge", "--sigma", "1.0", "--set", "model.n1=48",
                  "--set", "model.n2=48", "--set", "constraints.sets=martingale",
                  "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "jump ratio" in out
    assert "within 0 grid cell" in out or "within 1 grid cell" in out


def test_selfcheck_passes(tmp_path, capsys):
    rc = run_cli(["selfcheck", "--set", "model.n1=8", "--set", "model.n2=8"])
    assert rc == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out


def test_selfcheck_rejects_corrupted_measure(tmp_path, capsys):
    buf = io.StringIO()
    to_csv(canonical_test_measure(), buf)
    bad = buf.getvalue().replace("0.4", "0.9", 1)
    path = tmp_path / "bad.csv"
    path.write_text(bad)
    rc = run_cli(["selfcheck", "--measure", str(path)])
    assert rc == cli.EXIT_CHECK_FAILED
    assert "measure file invariants" in capsys.readouterr().out


def test_oracle_requires_three_radii(tmp_path, capsys):
    rc = run_cli(["oracle", "--set", "oracle.radii=0.0",
                  "--set", "criterion.name=linear:x2", "--out", str(tmp_path)])
    assert rc == cli.EXIT_BAD_CONFIG
    assert "3 radii" in capsys.readouterr().err


def test_oracle_report_written(tmp_path):
    rc = run_cli(["oracle", "--set", "criterion.name=linear:x2", "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    rep = json.load(open(tmp_path / "oracle.json"))
    assert rep["pass"]
    assert set(rep["constraint_sets"]) == {"none", "martingale", "marginal2", "both"}


def test_curve_partial_failure_writes_nan_markers(tmp_path):
    with pytest.warns(RuntimeWarning):
        rc = run_cli(["curve", "--set", "model.sigma=0.5,80.0",
                      "--set", "model.n1=8", "--set", "model.n2=8",
                      "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "curve.csv")))
    assert len(rows) == 2
    assert rows[0]["price"] not in ("", "nan")
    assert rows[1]["price"] == "nan"


def test_default_sigma_grid_csv_floats(tmp_path):
    rc = run_cli(["curve", "--set", "model.n1=8", "--set", "model.n2=8",
                  "--set", "criterion.name=linear:x2", "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    text = (tmp_path / "curve.csv").read_text()
    assert "np.float" not in text
    rows = list(csv.DictReader(open(tmp_path / "curve.csv")))
    assert len(rows) == 20                      # default log-spaced grid
    sig = [float(r["sigma"]) for r in rows]
    assert abs(sig[0] - 0.05) <= 1e-12 and abs(sig[-1] - 1.5) <= 1e-12
