import math

import numpy as np
import pytest

from latentprice import ModelParams, SimConfig, big_sigma, bid_ask, mean_exit_time_mc, simulate_path


def test_same_seed_gives_identical_paths(small_theta):
    a = simulate_path(SimConfig(small_theta, 50.0, seed=9))
    b = simulate_path(SimConfig(small_theta, 50.0, seed=9))
    c = simulate_path(SimConfig(small_theta, 50.0, seed=10))
    assert np.array_equal(a.latent, b.latent) and np.array_equal(a.order_flow, b.order_flow)
    assert not np.array_equal(a.latent, c.latent)


def test_path_layout_and_quote_consistency():
    p = ModelParams(1.0, 0.5, 0.4, 1.0, eps=0.15)
    path = simulate_path(SimConfig(p, 300.0, dt_sim=0.05, dt_obs=0.5, seed=2))
    assert len(path) == 601
    assert np.allclose(np.diff(path.times), 0.5)
    assert path.order_flow[0] == 0.0 and path.latent[0] == 100.5
    bid, ask = bid_ask(path.latent, p.eps)
    assert np.array_equal(bid, path.bid) and np.array_equal(ask, path.ask)
    assert path.meta["seed"] == 2 and path.meta["rng"] == "philox"


def test_uniform_start_lies_in_reference_cell(small_theta):
    x0 = [simulate_path(SimConfig(small_theta, 1.0, seed=s, x0="uniform")).latent[0] for s in range(20)]
    assert all(100.0 <= x < 101.0 for x in x0)
    assert len(set(x0)) == 20


@pytest.mark.parametrize(
    "kwargs",
    [dict(dt_sim=0.3), dict(dt_sim=2.0), dict(horizon_T=10.5), dict(x0="middle"), dict(x0=float("nan"))],
)
def test_invalid_config_rejected(small_theta, kwargs):
    base = dict(params=small_theta, horizon_T=10.0)
    base.update(kwargs)
    with pytest.raises(ValueError):
        SimConfig(**base)


def test_driftless_increment_variance():
    p = ModelParams(1.0, 0.0, 0.5, 1.0)
    ends = np.array([
        simulate_path(SimConfig(p, 100.0, dt_sim=0.1, seed=s)).latent[-1] for s in range(500)
    ]) - 100.5
    assert np.var(ends, ddof=1) == pytest.approx(0.5 * 100.0, rel=0.15)


def test_order_flow_quadratic_variation():
    p = ModelParams(1.0, 1.0, 0.5, 1.0)
    qv = [np.sum(np.diff(simulate_path(SimConfig(p, 100.0, dt_sim=0.1, seed=s)).order_flow) ** 2) / 100.0
          for s in range(500)]
    assert np.mean(qv) == pytest.approx(1.0, rel=0.05)


def test_weak_order_refinement():
    p = ModelParams(1.0, 1.0, 0.5, 1.0)
    coarse = np.array([simulate_path(SimConfig(p, 100.0, dt_sim=0.1, seed=s)).latent[-1] for s in range(400)])
    fine = np.array([simulate_path(SimConfig(p, 100.0, dt_sim=0.05, seed=s + 10_000)).latent[-1] for s in range(400)])
    se = math.sqrt(coarse.var(ddof=1) / coarse.size + fine.var(ddof=1) / fine.size)
    assert abs(coarse.mean() - fine.mean()) < 3 * se


def test_exit_time_of_brownian_motion():
    p = ModelParams(1.0, 0.0, 1.0, 2.0)
    est = mean_exit_time_mc(p, 4000, dt_sim=0.005, seed=3)
    assert abs(est.mean - 1.0) < 3 * est.stderr
    assert est.n_capped == 0


def test_exit_time_matches_closed_form():
    p = ModelParams(1.0, 2.0, 1.0, 2.0)
    est = mean_exit_time_mc(p, 3000, seed=4)
    assert abs(est.mean - 1.0 / big_sigma(p)) < 3 * est.stderr


def test_exit_time_standard_error_scaling():
    p = ModelParams(1.0, 1.0, 1.0, 2.0)
    a = mean_exit_time_mc(p, 1000, dt_sim=0.02, seed=1)
    b = mean_exit_time_mc(p, 2000, dt_sim=0.02, seed=1)
    assert b.stderr / a.stderr == pytest.approx(1 / math.sqrt(2), rel=0.15)


def test_exit_time_cap_counts_survivors():
    p = ModelParams(1.0, 0.0, 1e-4, 2.0)
    est = mean_exit_time_mc(p, 50, dt_sim=0.1, seed=0, time_cap=5.0)
    assert est.n_capped == 50


def test_exit_time_requires_paths(small_theta):
    with pytest.raises(ValueError):
        mean_exit_time_mc(small_theta, 0)
