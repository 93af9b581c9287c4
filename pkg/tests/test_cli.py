import json
import math

import numpy as np
import pytest

from crashlens import cli
from crashlens.data_io import PriceSeries, export_series, ingest_csv, read_fit_table
from crashlens.model import LpplParams
from crashlens.simulation import business_day_labels, gen_lppl_series

DOW = LpplParams(A=8.8106, B=-0.0165957, C=-0.0444881, alpha=0.554188, t_c=672.319, phi=0.0, omega=19.5637)


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def dow_csv(tmp_path):
    path = tmp_path / "dow.csv"
    export_series(gen_lppl_series(DOW, 0, 408, start_date="2006-01-18"), path)
    return path


def dated(tmp_path, y, name="in.csv"):
    path = tmp_path / name
    export_series(PriceSeries.from_log_prices(y, business_day_labels("2001-01-01", len(y))), path)
    return path


def test_parse_bounds():
    assert cli.parse_bounds("tc=600:700,omega=15:20,alpha=0.1:1") == {
        "t_c": (600.0, 700.0), "omega": (15.0, 20.0), "alpha": (0.1, 1.0)}
    with pytest.raises(cli.UsageError):
        cli.parse_bounds("gamma=1:2")
    with pytest.raises(cli.UsageError):
        cli.parse_bounds("tc=600")


def test_minima_v_shape(tmp_path, capsys):
    path = dated(tmp_path, np.abs(np.arange(41) - 20.0) * 0.01)
    code, out, _ = run(capsys, "minima", "--input", path, "--win", 5)
    report = json.loads(out)
    assert code == 0
    assert report["indices"] == [20.0]
    assert report["dates"] == [business_day_labels("2001-01-01", 41)[20]]
    assert report["triples"] == []


def test_minima_geometric(tmp_path, capsys):
    # minima placed on t_n = 1000 - 800 * 2^-n for n = 0..3: 200, 600, 800, 900
    t = np.arange(960.0)
    y = np.full(960, 1.0)
    for m in (200, 600, 800, 900):
        y -= 0.5 * np.exp(-((t - m) / 8.0) ** 2)
    out_path = tmp_path / "report.json"
    code, _, _ = run(capsys, "minima", "--input", dated(tmp_path, y), "--win", 30, "--output", out_path)
    report = json.loads(out_path.read_text())
    assert code == 0
    assert report["indices"] == [200.0, 600.0, 800.0, 900.0]
    for row in report["triples"]:
        assert row["lambda"] == pytest.approx(2.0, rel=1e-9)
        assert row["t_c"] == pytest.approx(1000.0, rel=1e-9)


def test_minima_three(tmp_path, capsys):
    t = np.arange(300.0)
    y = np.full(300, 1.0)
    for m in (50, 170, 230):
        y -= 0.5 * np.exp(-((t - m) / 6.0) ** 2)
    code, out, _ = run(capsys, "minima", "--input", dated(tmp_path, y), "--win", 20)
    assert len(json.loads(out)["triples"]) == 1


def test_fit_noiseless(dow_csv, tmp_path, capsys):
    out_csv = tmp_path / "fit.csv"
    code, out, _ = run(capsys, "fit", "--input", dow_csv, "--bounds", "tc=600:700", "--starts", 8,
                       "--seed", 1, "--output", out_csv)
    summary = json.loads(out)
    assert code == cli.EXIT_OK
    assert summary["converged"] and summary["r_squared"] > 0.9999
    assert summary["df"] == 402
    assert out_csv.with_suffix(".json").exists()
    assert len(read_fit_table(out_csv)["residual"]) == 409


def test_fit_with_minima_init(dow_csv, capsys):
    code, out, _ = run(capsys, "fit", "--input", dow_csv, "--bounds", "tc=600:700", "--starts", 4,
                       "--init", "minima", "--win", 20, "--aggregate", "mean")
    summary = json.loads(out)
    assert code == 0
    assert summary["init"]["lambda"] == pytest.approx(1.4, abs=0.05)
    assert abs(summary["params"]["t_c"] - 672.319) < 0.5


def test_fit_adversarial_box(dow_csv, capsys):
    code, out, _ = run(capsys, "fit", "--input", dow_csv, "--bounds", "tc=420:500", "--starts", 4)
    summary = json.loads(out)
    assert (not summary["converged"]) or "t_c" in summary["at_bounds"]
    assert code in (cli.EXIT_OK, cli.EXIT_NOT_CONVERGED)


def test_fit_infeasible_exit_code(dow_csv, tmp_path, capsys):
    out_csv = tmp_path / "never.csv"
    code, _, err = run(capsys, "fit", "--input", dow_csv, "--bounds", "tc=100:300", "--output", out_csv)
    assert code == cli.EXIT_INFEASIBLE
    assert "infeasible" in err
    assert not out_csv.exists()


def test_fit_non_convergence_exit_code(dow_csv, capsys):
    code, out, _ = run(capsys, "fit", "--input", dow_csv, "--bounds", "tc=600:700", "--starts", 1, "--max-iter", 3)
    assert code == cli.EXIT_NOT_CONVERGED
    assert json.loads(out)["converged"] is False


def test_fit_second_harmonic_not_worse(dow_csv, capsys):
    _, out1, _ = run(capsys, "fit", "--input", dow_csv, "--bounds", "tc=600:700", "--starts", 4)
    _, out2, _ = run(capsys, "fit", "--input", dow_csv, "--bounds", "tc=600:700", "--starts", 4, "--harmonic", 2)
    first, second = json.loads(out1), json.loads(out2)
    assert second["r_squared"] >= first["r_squared"] - 1e-12
    assert "D" in second["params"]


@pytest.mark.parametrize(
    "argv",
    [
        ["fit", "--bounds", "omega=20:15"],
        ["fit", "--bounds", "bogus"],
        ["fit", "--starts", "0"],
        ["fit", "--bounds", "alpha=0.1:2"],
    ],
)
def test_invalid_fit_options_write_nothing(dow_csv, tmp_path, capsys, argv):
    out_csv = tmp_path / "out.csv"
    code, _, _ = run(capsys, *argv, "--input", dow_csv, "--output", out_csv)
    assert code == cli.EXIT_VALIDATION
    assert not out_csv.exists()


def test_missing_input_is_validation_error(tmp_path, capsys):
    code, _, err = run(capsys, "minima", "--input", tmp_path / "nope.csv")
    assert code == cli.EXIT_VALIDATION and "error" in err


def test_simulate_lppl_exact(tmp_path, capsys):
    path = tmp_path / "lppl.csv"
    assert run(capsys, "simulate", "lppl", "--output", path)[0] == 0
    series = ingest_csv(path, "date", "close")
    np.testing.assert_allclose(series.log_prices, gen_lppl_series(DOW, 0, 408).log_prices, atol=1e-10)


def test_simulate_path_tiny_kappa_constant(tmp_path, capsys):
    path = tmp_path / "path.csv"
    code, _, _ = run(capsys, "simulate", "path", "--kappa", 1e-12, "--p0", 50, "--t-end", 90, "--tc", 100,
                     "--output", path)
    assert code == 0
    prices = np.loadtxt(path, delimiter=",", skiprows=1, usecols=2)
    np.testing.assert_allclose(prices, 50.0, rtol=1e-9)


@pytest.mark.parametrize(
    "mode_args",
    [
        ["lppl", "--noise", "0.02"],
        ["path", "--t-end", "90", "--tc", "100"],
        ["nocrash", "--t-end", "90", "--tc", "100"],
        ["lattice", "--side", "8", "--sweeps", "5", "--burn-in", "2"],
        ["lattice", "--side", "8", "--sweeps", "5", "--burn-in", "2", "--K-grid", "0,0.5,2"],
    ],
)
def test_simulate_is_byte_identical(tmp_path, capsys, mode_args):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(capsys, "simulate", *mode_args, "--seed", 5, "--output", a)
    run(capsys, "simulate", *mode_args, "--seed", 5, "--output", b)
    assert a.read_bytes() == b.read_bytes()


def test_env_seed_fallback(tmp_path, capsys, monkeypatch):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    monkeypatch.setenv("CRASHLENS_SEED", "9")
    run(capsys, "simulate", "lppl", "--noise", "0.02", "--output", a)
    run(capsys, "simulate", "lppl", "--noise", "0.02", "--seed", "9", "--output", b)
    run(capsys, "simulate", "lppl", "--noise", "0.02", "--seed", "10", "--output", c)
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()
    monkeypatch.setenv("CRASHLENS_SEED", "x")
    assert run(capsys, "simulate", "lppl", "--output", tmp_path / "d.csv")[0] == cli.EXIT_VALIDATION


def test_simulate_invalid_params_write_nothing(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    code, _, _ = run(capsys, "simulate", "path", "--B1", "0.9", "--B0", "0.1", "--output", path)
    assert code == cli.EXIT_VALIDATION and not path.exists()
    code, _, _ = run(capsys, "simulate", "lattice", "--K", "0", "--sigma", "0", "--output", path)
    assert code == cli.EXIT_VALIDATION and not path.exists()


def test_fit_is_byte_identical(dow_csv, tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    outs = []
    for path in (a, b):
        outs.append(run(capsys, "fit", "--input", dow_csv, "--bounds", "tc=600:700", "--starts", 2, "--seed", 3,
                        "--output", path)[1])
    assert outs[0] == outs[1]
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()
