import subprocess
import sys

import numpy as np
import pytest

from latentprice import load_dataset, load_result
from latentprice.cli import EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, run
from latentprice.dataio import read_surface

SIM = ["simulate", "--theta", "1,0.2,0.02", "--sigma-bar2", "0.1"]


def _meta(path):
    return dict(l[2:].split("=", 1) for l in path.read_text().splitlines() if l.startswith("# ") and "=" in l)


def test_simulate_is_reproducible(tmp_path, monkeypatch):
    for sub in ("1", "2"):
        (tmp_path / sub).mkdir()
        monkeypatch.chdir(tmp_path / sub)
        assert run(SIM + ["--T", "50", "--seed", "4", "--out", "d.csv"]) == EXIT_OK
    a, b = tmp_path / "1" / "d.csv", tmp_path / "2" / "d.csv"
    assert a.read_bytes() == b.read_bytes()
    meta = _meta(a)
    assert meta["config.theta"] == "1.0,0.2,0.02" and meta["config.seed"] == "4"
    assert len(load_dataset(a)) == 51


def test_config_overlay_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("theta=1,0.2,0.02\nsigma-bar2=0.1\nT=20\nseed=1\n")
    out = tmp_path / "d.csv"
    assert run(["simulate", "--config", str(cfg), "--seed", "9", "--out", str(out)]) == EXIT_OK
    meta = _meta(out)
    assert meta["config.seed"] == "9" and meta["config.T"] == "20.0"


def test_unknown_flag_is_usage_error(capsys):
    assert run(["simulate", "--bogus"]) == EXIT_USAGE
    assert "usage:" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--theta", "1,0.2", "--sigma-bar2", "0.1", "--T", "5", "--out", "x"],
        SIM + ["--T", "5"],
        SIM[:3] + ["--sigma-bar2", "0.01", "--T", "5", "--out", "x"],
        SIM + ["--T", "5.5", "--out", "x"],
        [],
    ],
)
def test_invalid_invocations_are_usage_errors(argv, capsys):
    assert run(argv) == EXIT_USAGE


def test_bad_config_key_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour=blue\n")
    assert run(["verify", "--config", str(cfg)]) == EXIT_USAGE
    assert "error[usage]" in capsys.readouterr().err


def test_missing_input_is_data_error(tmp_path, capsys):
    code = run(["estimate", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "r.txt")])
    assert code == EXIT_DATA
    assert "latentprice: error[data]:" in capsys.readouterr().err


def test_malformed_input_is_data_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,bid,ask,order_flow\n0,100,100,0\n")
    assert run(["estimate", "--input", str(bad), "--out", str(tmp_path / "r.txt")]) == EXIT_DATA


def test_estimate_recovers_seeded_fixture(tmp_path, capsys):
    data, res = tmp_path / "d.csv", tmp_path / "r.txt"
    assert run(SIM + ["--T", "5000", "--seed", "1", "--out", str(data)]) == EXIT_OK
    code = run(["estimate", "--input", str(data), "--out", str(res),
                "--grid-alpha2", "0.5:1:2", "--grid-sigma2", "0.02:0.03:2"])
    assert code == EXIT_OK
    out = load_result(res)
    assert out.alpha**2 == pytest.approx(1.0) and out.sigma2 == pytest.approx(0.02)
    assert out.meta["kernel_builds"] == out.meta["n_candidates"] == "4"
    assert out.meta["config.grid_alpha2"] == "0.5:1.0:2"
    surface, meta = read_surface(tmp_path / "r.surface.csv")
    assert surface.shape == (4, 4) and meta["config.input"] == str(data)
    assert "alpha=" in capsys.readouterr().out

    sl = tmp_path / "slices.csv"
    assert run(["surface", "--input", str(res), "--out", str(sl)]) == EXIT_OK
    rows = [l for l in sl.read_text().splitlines() if not l.startswith("#")]
    assert rows[0] == "varying,alpha2,sigma2,beta,loglik_per_T"
    assert len(rows) == 5
    assert {r.split(",")[0] for r in rows[1:]} == {"sigma2", "alpha2"}


def test_filter_table(tmp_path):
    data, out = tmp_path / "d.csv", tmp_path / "f.csv"
    assert run(SIM + ["--T", "30", "--seed", "2", "--out", str(data)]) == EXIT_OK
    assert run(["filter", "--input", str(data), "--theta", "1,0.2,0.02", "--sigma-bar2", "0.1",
                "--out", str(out)]) == EXIT_OK
    lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "time,order_flow,mu,loglik_increment"
    mu = np.array([float(l.split(",")[2]) for l in lines[1:]])
    assert mu.size == 31 and np.all(np.abs(mu) < 0.5)
    assert "config.theta" in _meta(out)


def test_tick_ingestion(tmp_path):
    ticks = tmp_path / "t.csv"
    rows = ["timestamp,bid,ask,order_flow"] + [f"{3600 + 0.7 * i},{100 + (i // 9) % 2},{101 + (i // 9) % 2},{10 + 0.3 * i}"
                                               for i in range(400)]
    ticks.write_text("\n".join(rows) + "\n")
    code = run(["estimate", "--ticks", "--input", str(ticks), "--out", str(tmp_path / "r.txt"),
                "--window-start", "10:30", "--window-end", "10:34", "--grid-alpha2", "0.5:1:2"])
    assert code == EXIT_OK
    res = load_result(tmp_path / "r.txt")
    # 10:30 to 10:34 at one-second steps, flow rebased to zero
    assert res.meta["horizon"] == "240.0"
    assert res.sigma_bar2 == pytest.approx((0.3 / 0.7) ** 2, rel=0.15)


def test_verify_reports_failures_with_numerical_code(monkeypatch, capsys):
    from latentprice import verify

    ok = verify.CheckResult("fine", True, 0.0, 1.0)
    bad = verify.CheckResult("broken", False, 2.0, 1.0)
    monkeypatch.setattr(verify, "quick_battery", lambda seed=0: [ok, bad])
    assert run(["verify"]) == EXIT_NUMERICAL
    out = capsys.readouterr().out
    assert "[PASS] fine" in out and "[FAIL] broken" in out and "1/2 checks passed" in out


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "latentprice.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "latentprice" in proc.stdout
