import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentprice import (
    ModelParams,
    ParamGrid,
    SimConfig,
    big_sigma,
    grid_search_mle,
    invert_beta,
    log_likelihood,
    simulate_path,
)
from latentprice.likelihood import loglik_from_mu, phi_inverse
from latentprice.model import phi


def test_three_step_fixture():
    assert loglik_from_mu([0.1, -0.2, 0.0], [1.0, -1.0, 2.0], beta=1.0, sigma_bar2=1.0) == pytest.approx(0.275)


def test_loglik_from_mu_checks_shapes():
    with pytest.raises(ValueError):
        loglik_from_mu([0.1, 0.2], [1.0], 1.0, 1.0)


def test_zero_drift_likelihood_is_exactly_zero(short_path):
    assert loglik_from_mu([0.3, -0.1], [1.0, 2.0], beta=0.0, sigma_bar2=1.0) == 0.0
    assert log_likelihood(short_path, ModelParams(1.0, 0.0, 0.02, 0.1)) == 0.0


def test_true_parameter_beats_perturbation_on_average():
    truth = ModelParams(1.0, 0.2, 0.02, 0.1)
    other = ModelParams(1.0, 0.6, 0.02, 0.1)
    gaps = []
    for seed in range(20):
        path = simulate_path(SimConfig(truth, 5000.0, seed=100 + seed))
        gaps.append(log_likelihood(path, truth) - log_likelihood(path, other))
    assert np.mean(gaps) > 0


# ---------------------------------------------------------------- beta inversion

def test_invert_beta_boundary_and_inadmissible():
    assert invert_beta(1.0, 0.5, 1.0, 0.5) == 0.0
    assert invert_beta(1.0, 0.4, 1.0, 0.5) is None
    assert invert_beta(1.0, 1.0, 1.0, 0.5) is None
    with pytest.raises(ValueError):
        invert_beta(-1.0, 0.5, 1.0, 0.4)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.2, 5.0),
    st.floats(0.05, 0.95),
    st.floats(0.05, 0.95),
)
def test_invert_beta_round_trip(alpha2, sigma_frac, sigma_hat_frac):
    sigma_bar2 = 1.0
    sigma2 = sigma_frac * alpha2 * sigma_bar2
    Sigma_hat = sigma2 * (0.3 + 0.69 * sigma_hat_frac)
    beta = invert_beta(alpha2, sigma2, sigma_bar2, Sigma_hat)
    p = ModelParams.from_alpha2(alpha2, beta, sigma2, sigma_bar2)
    assert big_sigma(p) == pytest.approx(Sigma_hat, rel=1e-8)


def test_invert_beta_matches_brute_force_scan(rng):
    gammas = np.linspace(0.0, 60.0, 1_000_001)
    # phi on a coarse table, refined by monotone interpolation of its log
    table_z = np.linspace(0.0, 60.0, 601)
    table = np.array([math.log(phi(z)) for z in table_z])
    log_phi_scan = np.interp(gammas, table_z, table)
    for _ in range(5):
        alpha2 = rng.uniform(0.3, 3.0)
        sigma2 = rng.uniform(0.1, 0.9) * alpha2
        ratio = rng.uniform(1.05, 4.0)
        Sigma_hat = sigma2 / ratio
        beta = invert_beta(alpha2, sigma2, 1.0, Sigma_hat)
        g_scan = gammas[np.argmin(np.abs(sigma2 * np.exp(-log_phi_scan) - Sigma_hat))]
        g = beta * math.sqrt(alpha2) / sigma2
        assert g == pytest.approx(g_scan, rel=2e-3)


def test_invert_beta_decreasing_in_target():
    betas = [invert_beta(1.0, 0.5, 1.0, s) for s in np.linspace(0.1, 0.49, 30)]
    assert np.all(np.diff(betas) < 0)


def test_phi_inverse():
    assert phi_inverse(1.0) == 0.0
    assert phi(phi_inverse(2.5)) == pytest.approx(2.5, rel=1e-10)
    with pytest.raises(ValueError):
        phi_inverse(0.9)


# ---------------------------------------------------------------- grid search

def test_param_grid_excludes_inadmissible_pairs():
    g = ParamGrid.rectangular([0.5, 1.0], [0.01, 0.02, 0.03, 0.2], sigma_bar2=0.1, Sigma_hat=0.015)
    # sigma2 = 0.01 is below Sigma_hat and 0.2 exceeds alpha2 * sigma_bar2
    assert g.excluded == 4 and len(g) == 4
    for a2, s2, b in g.candidates:
        p = ModelParams.from_alpha2(a2, b, s2, 0.1)
        assert big_sigma(p) == pytest.approx(0.015, rel=1e-8)


def test_default_grid_is_admissible():
    g = ParamGrid.default(0.1, 0.015, n_alpha2=20, n_sigma2=20)
    assert len(g) + g.excluded == 400
    assert len(g) > 0
    assert all(b > 0 for _, _, b in g.candidates)


def test_single_candidate_grid(short_path):
    g = ParamGrid.rectangular([1.0], [0.02], 0.1, 0.015)
    res = grid_search_mle(short_path, g)
    assert res.loglik_surface.shape == (1, 4)
    assert res.theta_hat.sigma2 == 0.02 and res.theta_hat.alpha2 == pytest.approx(1.0)
    assert res.max_loglik == res.loglik_surface[0, 3]


def test_empty_grid_rejected(short_path):
    g = ParamGrid.rectangular([1.0], [0.001], 0.1, 0.015)
    with pytest.raises(ValueError):
        grid_search_mle(short_path, g)


def test_grid_search_is_order_invariant(short_path):
    g = ParamGrid.rectangular([0.5, 1.0, 2.0], [0.02, 0.03, 0.04], 0.1, 0.015)
    res = grid_search_mle(short_path, g)
    shuffled = ParamGrid(g.sigma_bar2, g.Sigma_hat, list(reversed(g.candidates)), g.excluded)
    res2 = grid_search_mle(short_path, shuffled)
    assert np.array_equal(res.loglik_surface, res2.loglik_surface)
    assert res.theta_hat == res2.theta_hat
    best = res.loglik_surface[np.argmax(res.loglik_surface[:, 3])]
    assert res.theta_hat.alpha2 == pytest.approx(best[0]) and res.theta_hat.sigma2 == best[1]
    assert res.diagnostics["kernel_builds"] == len(g)


def test_ties_resolve_to_smallest_pair(short_path):
    # driftless candidates all score exactly zero
    cands = [(2.0, 0.02, 0.0), (1.0, 0.03, 0.0), (1.0, 0.02, 0.0)]
    res = grid_search_mle(short_path, ParamGrid(0.1, 0.02, cands, 0))
    assert len(res.ties) == 3
    assert (res.theta_hat.alpha2, res.theta_hat.sigma2) == pytest.approx((1.0, 0.02))
    assert res.ties[0][:2] == (1.0, 0.02)


def test_workers_give_same_surface(short_path):
    g = ParamGrid.rectangular([0.5, 1.0, 2.0], [0.02, 0.03], 0.1, 0.015)
    a = grid_search_mle(short_path, g, workers=1, chunk_size=2)
    b = grid_search_mle(short_path, g, workers=2, chunk_size=2)
    assert np.array_equal(a.loglik_surface, b.loglik_surface)
