import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentprice import ModelParams, big_sigma, bid_ask, chi, mu, phi, psi
from latentprice.model import identifiability_ratio, chi_tail_mass, log_phi
from latentprice.oracles import simpson_phi, simpson_psi
from latentprice.quadrature import Quadrature, QuadratureError

# frozen from scipy.integrate.quad / dblquad at 1e-15 absolute tolerance
PSI_1 = 0.8488727670040446
PHI_1 = 1.0055687995992586


@pytest.mark.parametrize("x, expected", [(0.5, 0.0), (0.75, 0.25), (-0.25, 0.25), (100.0, -0.5), (-1e-18, -0.5)])
def test_mu_values(x, expected):
    assert mu(x) == pytest.approx(expected, abs=1e-15)


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_mu_is_periodic_and_bounded(x):
    m = mu(x)
    assert -0.5 <= m < 0.5
    assert mu(x + 1.0) == pytest.approx(m, abs=1e-9)


def test_mu_rejects_nonfinite():
    with pytest.raises(ValueError):
        mu(np.array([0.1, np.nan]))


@pytest.mark.parametrize(
    "x, eps, expected",
    [(2.5, 0.1, (2, 3)), (2.05, 0.1, (1, 3)), (3.0, 0.0, (2, 4)), (2.95, 0.1, (2, 4))],
)
def test_bid_ask_examples(x, eps, expected):
    assert bid_ask(x, eps) == expected


@given(st.floats(-1e4, 1e4, allow_nan=False), st.floats(0.0, 0.49))
def test_bid_ask_brackets_latent_price(x, eps):
    bid, ask = bid_ask(x, eps)
    assert bid <= x <= ask
    assert ask - bid in (1, 2)


def test_bid_ask_rejects_bad_halfwidth():
    with pytest.raises(ValueError):
        bid_ask(1.2, 0.5)


def test_special_functions_at_zero():
    assert phi(0.0) == 1.0
    assert psi(0.0) == 1.0


def test_special_functions_frozen_values():
    assert psi(1.0) == pytest.approx(PSI_1, abs=1e-13)
    assert phi(1.0) == pytest.approx(PHI_1, abs=1e-13)


@pytest.mark.parametrize("z", [0.5, 2.0, 10.0])
def test_special_functions_match_simpson(z):
    assert psi(z) == pytest.approx(simpson_psi(z), abs=1e-10)
    assert phi(z) == pytest.approx(simpson_phi(z, n=400), abs=1e-8)


def test_phi_increasing_and_psi_decreasing():
    zs = np.linspace(0.0, 30.0, 31)
    ph = [phi(z) for z in zs]
    ps = [psi(z) for z in zs]
    assert np.all(np.diff(ph) > 0)
    assert np.all(np.diff(ps) < 0)
    assert all(p < 1 for p in ps[1:])


def test_log_phi_consistent_across_branch():
    for z in (50.0, 200.0, 1000.0):
        lp = log_phi(z)
        assert math.isfinite(lp)
        if z < 500:
            assert math.exp(lp) == pytest.approx(phi(z), rel=1e-12)


def test_special_functions_reject_negative():
    with pytest.raises(ValueError):
        phi(-1.0)
    with pytest.raises(ValueError):
        psi(float("nan"))


def test_chi_examples():
    assert np.allclose(chi(0.0, np.linspace(0, 1, 7)), 1.0)
    assert chi(3.0, 0.0) == pytest.approx(chi(3.0, 1.0))
    assert chi(3.0, 0.0) == pytest.approx(1.0 / psi(3.0))


def test_chi_integrates_to_one():
    q = Quadrature()
    for g in (0.5, 2.0, 5.0):
        assert q.integrate(lambda x: chi(g, x), 0.0, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_chi_tail_mass_uniform_case():
    assert chi_tail_mass(0.0, 0.05) == pytest.approx(0.1, abs=1e-14)
    assert chi_tail_mass(2.0, 0.0) == 0.0
    assert chi_tail_mass(2.0, 0.5) == pytest.approx(1.0, abs=1e-12)


def test_big_sigma_examples():
    assert big_sigma(ModelParams(1.0, 0.0, 0.3, 1.0)) == 0.3
    assert big_sigma(ModelParams(1.0, 1.0, 1.0, 2.0)) == pytest.approx(1.0 / PHI_1, abs=1e-13)


def test_model_params_derived_quantities():
    p = ModelParams(2.0, 0.5, 0.8, 1.0)
    assert p.gamma == pytest.approx(2.0 * 0.5 / 0.8)
    assert p.kappa == pytest.approx(0.8 / (2.0 * 1.0))
    assert p.flow_noise_var == pytest.approx(1.0 - 0.8 / 4.0)
    assert ModelParams.from_alpha2(4.0, 0.5, 0.8, 1.0) == p


@pytest.mark.parametrize(
    "args",
    [(0.0, 1.0, 0.5, 1.0), (1.0, -0.1, 0.5, 1.0), (1.0, 1.0, 1.0, 1.0), (1.0, 1.0, 0.5, 1.0, 0.5), (1.0, float("inf"), 0.5, 1.0)],
)
def test_model_params_validation(args):
    with pytest.raises(ValueError):
        ModelParams(*args)


def test_identifiability_ratio_monotone_with_finite_origin_limit():
    zs = np.linspace(0.01, 20.0, 60)
    vals = np.array([identifiability_ratio(z) for z in zs])
    assert np.all(np.isfinite(vals))
    d = np.diff(vals)
    assert np.all(d > 0) or np.all(d < 0)
    assert identifiability_ratio(1e-3) == pytest.approx(identifiability_ratio(1e-4), rel=0.05)


def test_quadrature_converges_on_smooth_integrand():
    q = Quadrature(order=8, tol=1e-13)
    assert q.integrate(np.sin, 0.0, math.pi) == pytest.approx(2.0, abs=1e-13)


def test_quadrature_reports_failure():
    q = Quadrature(order=2, tol=1e-15, max_panels=4)
    with pytest.raises(QuadratureError):
        q.integrate(lambda x: np.sqrt(np.abs(x - 0.3)), 0.0, 1.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 40.0))
def test_psi_bounds(z):
    # the integrand lies between exp(-z/4) and 1
    assert math.exp(-z / 4) <= psi(z) <= 1.0
