from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from pecusum.cli import main
from pecusum.io import load_panel, read_records_csv, save_panel
from pecusum.panel import FunctionalPanel, make_uniform_grid
from pecusum.simulate import DgpConfig, gen_panel

FAST = ["--draws", "300", "--bridge-grid", "50"]


def _run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _three_group_file(tmp_path):
    r = np.random.default_rng(0)
    n, t, g = 12, 80, 5
    x = 0.01 * r.standard_normal((n, t, g))
    for i in range(9):
        x[i, (20, 40, 60)[i // 3] :] += 3.0
    path = tmp_path / "groups.csv"
    save_panel(FunctionalPanel(x, make_uniform_grid(g)), path)
    return path


def test_test_command_report(tmp_path, capsys):
    panel, _ = gen_panel(DgpConfig(n=8, t=30, grid_size=9, seed=1))
    f = tmp_path / "null.csv"
    save_panel(panel, f)
    code, out, _ = _run(capsys, ["test", "--data", str(f), *FAST, "--alpha", "0.05"])
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == 1 and doc["command"] == "test"
    assert set(doc["result"]) >= {"z_nt", "z_pe", "z_hat", "p_value", "critical_values"}
    assert doc["config"]["alphas"] == [0.05]
    assert doc["panel"] == {"n_subjects": 8, "n_times": 30, "grid_size": 9}


def test_null_panels_rarely_reject_with_plain_cusum(tmp_path, capsys):
    # a huge c_xi switches the enhancement off, leaving the calibrated CUSUM part
    rejections = 0
    seeds = range(40)
    for s in seeds:
        panel, _ = gen_panel(DgpConfig(n=10, t=40, grid_size=9, seed=100 + s))
        f = tmp_path / f"n{s}.csv"
        save_panel(panel, f)
        code, out, _ = _run(capsys, ["test", "--data", str(f), "--c-xi", "1e6",
                                     "--alpha", "0.05", "--seed", str(s), *FAST])
        assert code == 0
        rejections += json.loads(out)["reject"]["0.05"]
    assert rejections / len(seeds) <= 0.15


def test_breaks_and_cluster_commands(tmp_path, capsys):
    f = _three_group_file(tmp_path)
    code, out, _ = _run(capsys, ["breaks", "--data", str(f), "--c-xi", "0.5"])
    assert code == 0
    rep = json.loads(out)["report"]
    assert rep["with_breaks"] == list(range(1, 10))
    code, out, _ = _run(capsys, ["cluster", "--data", str(f), "--c-xi", "0.5", "--kbar", "5"])
    assert code == 0
    model = json.loads(out)["model"]
    assert model["k"] == 3
    assert model["pooled_b"] == [20, 40, 60]


def test_null_command_writes_file(tmp_path, capsys):
    panel, _ = gen_panel(DgpConfig(n=6, t=30, grid_size=7, seed=4))
    f = tmp_path / "p.csv"
    save_panel(panel, f)
    out_json = tmp_path / "null.json"
    code, _, _ = _run(capsys, ["null", "--data", str(f), *FAST, "--out", str(out_json)])
    assert code == 0
    doc = json.loads(out_json.read_text())
    assert doc["n_draws"] == 300 and set(doc["quantiles"]) == {"0.01", "0.05", "0.1"}


def test_cidr_then_test_end_to_end(tmp_path, capsys):
    # index-constituent shaped fixture: 5 stocks, 25 days, 5-minute prices
    r = np.random.default_rng(3)
    n, days, g = 5, 25, 79
    logp = np.log(100.0) + np.cumsum(0.001 * r.standard_normal((n, days, g)), axis=2)
    lines = ["subject,time,gridpoint,value"]
    for i in range(n):
        for d in range(days):
            for j in range(g):
                lines.append(f"S{i},{d + 1},{j / (g - 1)!r},{float(np.exp(logp[i, d, j]))!r}")
    prices = tmp_path / "prices.csv"
    prices.write_text("\n".join(lines) + "\n")
    cidr = tmp_path / "cidr.csv"
    assert main(["cidr", "--prices", str(prices), "--out", str(cidr)]) == 0
    panel = load_panel(cidr)
    assert panel.data.shape == (n, days, g)
    assert not panel.data[:, :, 0].any()
    code, out, _ = _run(capsys, ["test", "--data", str(cidr), *FAST])
    assert code == 0 and "z_hat" in json.loads(out)["result"]
    dropped = tmp_path / "cidr78.csv"
    assert main(["cidr", "--prices", str(prices), "--out", str(dropped), "--drop-first"]) == 0
    short = load_panel(dropped)
    assert short.data.shape == (n, days, g - 1)
    np.testing.assert_allclose(short.data, panel.data[:, :, 1:], rtol=1e-15)


def test_simulate_command(tmp_path, capsys):
    conf = tmp_path / "sim.toml"
    conf.write_text(
        "[dgp]\nn = 10\nt = 30\ngrid_size = 9\nsdr = 0.3\nsnr = 0.5\n"
        "[experiment]\nn_draws = 100\nbridge_grid = 30\nalphas = [0.05]\n"
    )
    out_dir = tmp_path / "res"
    code, out, _ = _run(capsys, ["simulate", "--config", str(conf), "--reps", "2",
                                 "--out", str(out_dir), "--seed", "7"])
    assert code == 0
    recs = read_records_csv(out_dir / "replications.csv")
    assert [r["status"] for r in recs] == ["ok", "ok"]
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["config"]["seed"] == 7 and summary["replications"] == 2


def test_errors_exit_2_with_json(tmp_path, capsys):
    f = tmp_path / "bad.csv"
    f.write_text("subject,time,gridpoint,value\nA,1,0,1\nA,1,1,2\nA,2,0,3\n")
    code, _, err = _run(capsys, ["test", "--data", str(f)])
    assert code == 2
    assert json.loads(err)["type"] == "CompletenessError"
    code, _, err = _run(capsys, ["test", "--data", str(tmp_path / "missing.csv")])
    assert code == 2 and json.loads(err)["type"] == "FileNotFoundError"


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "pecusum.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("test", "breaks", "cluster", "null", "cidr", "simulate"):
        assert cmd in res.stdout


@pytest.mark.parametrize("argv", [["test"], ["bogus"]])
def test_usage_errors(argv):
    with pytest.raises(SystemExit):
        main(argv)
