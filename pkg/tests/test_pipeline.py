import numpy as np
import pytest

from latentprice import AxisSpec, ModelParams, ParamGrid, SimConfig, estimate_session, simulate_path
from latentprice import verify
from latentprice.cli import run
from latentprice.pipeline import build_grid


def test_axis_spec_parse_and_values():
    ax = AxisSpec.parse("0.5:2:4")
    assert ax == AxisSpec(0.5, 2.0, 4)
    assert np.allclose(ax.values(), [0.5, 1.0, 1.5, 2.0])
    assert AxisSpec.parse(str(ax)) == ax
    assert np.array_equal(AxisSpec(3.0, 3.0, 1).values(), [3.0])


@pytest.mark.parametrize("text", ["1:2", "a:2:3", "2:1:3", "1:2:0"])
def test_axis_spec_rejects_bad_text(text):
    with pytest.raises(ValueError):
        AxisSpec.parse(text)


def test_build_grid_fills_missing_axis():
    default = ParamGrid.default(0.1, 0.015)
    assert build_grid(0.1, 0.015).candidates == default.candidates
    g = build_grid(0.1, 0.015, alpha2=AxisSpec(0.5, 1.0, 3))
    assert np.allclose(g.alpha2_axis, [0.5, 0.75, 1.0])
    assert np.array_equal(g.sigma2_axis, default.sigma2_axis)


def test_estimate_session_outputs(small_theta):
    path = simulate_path(SimConfig(small_theta, 2000.0, seed=6, x0="uniform"))
    res, mle = estimate_session(path, AxisSpec(0.5, 2.0, 3), AxisSpec(0.02, 0.04, 3), meta={"tag": "x"})
    assert res.meta["tag"] == "x"
    assert res.meta["n_candidates"] + res.meta["excluded"] == 9
    assert res.meta["kernel_builds"] == res.meta["n_candidates"]
    assert res.m_blocks == 44
    assert res.alpha == pytest.approx(mle.theta_hat.alpha)
    assert res.surface.shape == (res.meta["n_candidates"], 4)
    assert 0 < res.eps < 0.5


def test_check_result_line():
    r = verify.CheckResult("demo", True, 0.01, 0.02, "note", 1.5)
    assert r.line() == "[PASS] demo: measured=0.01 tolerance=0.02 (note) [1.5s]"
    assert verify.CheckResult("demo", False, 1, 0).line().startswith("[FAIL] demo")


def test_decoys_share_the_moment_target():
    from latentprice import big_sigma

    truth = ModelParams(*verify.MLE_THETA)
    cands = verify.decoy_set(verify.MLE_THETA)
    assert len(cands) == 4 and cands[0] == truth
    for d in cands[1:]:
        assert big_sigma(d) == pytest.approx(big_sigma(truth), rel=1e-8)
        assert d.theta != truth.theta


@pytest.mark.parametrize(
    "check",
    [verify.check_special_functions, verify.check_identifiability_ratio, verify.check_invert_beta, verify.check_data_roundtrip],
)
def test_deterministic_checks_pass(check):
    assert check().passed


def test_verify_command_runs_quick_battery(capsys):
    assert run(["verify", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 10 and "10/10 checks passed" in out
    assert "filter vs particle filter" in out and "exit time" in out
