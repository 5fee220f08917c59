"""Scalar functions and parameter type of the latent-price diffusion.

The latent price ``X`` (in ticks) and the cumulative order flow ``Y`` follow::

    dX = alpha * beta * mu(X) dt + sigma dB
    dY = dX / alpha + sqrt(sigma_bar2 - sigma2 / alpha**2) dW

with the 1-periodic micro-drift ``mu(x) = x mod 1 - 1/2``. Quotes are the
roundings ``bid_ask(X, eps)``. Everything in this module is pure; the
special functions are memoized per argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .quadrature import DEFAULT_QUADRATURE, Quadrature

# Above this argument phi is evaluated with the exponent shifted by z/4.
_LOG_DOMAIN_Z = 50.0
_CHUNK = 2048


@dataclass(frozen=True)
class ModelParams:
    """Full parameterization ``theta = (alpha, beta, sigma2)`` plus known constants.

    Attributes
    ----------
    alpha : float
        Price impact, ticks per unit of signed volume.
    beta : float
        Micro-drift strength (1/time). ``beta == 0`` is the driftless fixture.
    sigma2 : float
        Variance rate of the latent price (ticks**2 / time).
    sigma_bar2 : float
        Variance rate of the order flow (volume**2 / time).
    eps : float
        Half-width around integers where the spread widens to two ticks.
    """

    alpha: float
    beta: float
    sigma2: float
    sigma_bar2: float
    eps: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "sigma2", "sigma_bar2", "eps"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.sigma2 <= 0 or self.sigma_bar2 <= 0:
            raise ValueError("sigma2 and sigma_bar2 must be > 0")
        if not self.sigma2 < self.alpha**2 * self.sigma_bar2:
            raise ValueError(
                f"need sigma2 < alpha^2 * sigma_bar2, got {self.sigma2} >= "
                f"{self.alpha**2 * self.sigma_bar2}"
            )
        if not 0.0 <= self.eps < 0.5:
            raise ValueError(f"eps must lie in [0, 1/2), got {self.eps}")

    @classmethod
    def from_alpha2(cls, alpha2, beta, sigma2, sigma_bar2, eps=0.0) -> "ModelParams":
        return cls(math.sqrt(alpha2), beta, sigma2, sigma_bar2, eps)

    @property
    def alpha2(self) -> float:
        return self.alpha**2

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def gamma(self) -> float:
        """Shape of the stationary density, ``alpha * beta / sigma2``."""
        return self.alpha * self.beta / self.sigma2

    @property
    def kappa(self) -> float:
        """Loading removing the covariation between ``X - kappa Y`` and ``Y``."""
        return self.sigma2 / (self.alpha * self.sigma_bar2)

    @property
    def flow_noise_var(self) -> float:
        """Variance rate of the order-flow noise independent of ``X``."""
        return self.sigma_bar2 - self.sigma2 / self.alpha**2

    @property
    def theta(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.sigma2)


def mu(x):
    """Micro-drift ``x mod 1 - 1/2``, valued in ``[-1/2, 1/2)``.

    Works elementwise on arrays. Negative inputs wrap upward, so ``mu`` is
    1-periodic on the whole line.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("mu requires finite input")
    r = np.mod(x, 1.0)
    # np.mod can return 1.0 for tiny negative inputs
    r = np.where(r >= 1.0, 0.0, r)
    out = r - 0.5
    return float(out) if out.ndim == 0 else out


def bid_ask(x, eps):
    """Best bid and ask (integer ticks) for latent price ``x``.

    Returns ``(floor(x), ceil(x))`` unless some integer ``i`` lies within
    ``eps`` of ``x``, in which case the spread widens to ``(i - 1, i + 1)``.
    Accepts scalars or arrays.
    """
    if not 0.0 <= eps < 0.5:
        raise ValueError(f"eps must lie in [0, 1/2), got {eps}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("bid_ask requires finite input")
    nearest = np.floor(x + 0.5)
    wide = np.abs(x - nearest) <= eps
    bid = np.where(wide, nearest - 1, np.floor(x)).astype(np.int64)
    ask = np.where(wide, nearest + 1, np.floor(x) + 1).astype(np.int64)
    if bid.ndim == 0:
        return int(bid), int(ask)
    return bid, ask


def _check_z(z):
    if not (math.isfinite(z) and z >= 0):
        raise ValueError(f"argument must be finite and >= 0, got {z}")


def _nested(quad: Quadrature, inner_fn, panels: int) -> float:
    """``2 * int_0^1 int_0^x inner_fn(x, y) dy dx`` with both splits at 1/2."""
    total = 0.0
    s, w = quad.nodes(0.0, 1.0, panels)
    for lo, hi in ((0.0, 0.5), (0.5, 1.0)):
        xs, wx = quad.nodes(lo, hi, panels)
        for start in range(0, xs.size, _CHUNK):
            x = xs[start : start + _CHUNK, None]
            wxc = wx[start : start + _CHUNK]
            if hi <= 0.5:
                y = x * s[None, :]
                inner = (inner_fn(x, y) * w[None, :]).sum(axis=1) * x[:, 0]
            else:
                y1 = 0.5 * s[None, :]
                y2 = 0.5 + (x - 0.5) * s[None, :]
                inner = 0.5 * (inner_fn(x, y1) * w[None, :]).sum(axis=1)
                inner += (inner_fn(x, y2) * w[None, :]).sum(axis=1) * (x[:, 0] - 0.5)
            total += float(np.dot(wxc, inner))
    return 2.0 * total


@lru_cache(maxsize=65536)
def _phi_minus_one(z: float, quad: Quadrature) -> float:
    if z == 0.0:
        return 0.0

    def f(x, y):
        return np.expm1(z * ((y - 0.5) ** 2 - (x - 0.5) ** 2))

    value, _ = quad.refine(lambda p: _nested(quad, f, p), relative=True)
    return value


@lru_cache(maxsize=65536)
def _log_phi_shifted(z: float, quad: Quadrature) -> float:
    # log phi(z) - z/4; exponent of the integrand is bounded by z/4
    def f(x, y):
        return np.exp(z * ((y - 0.5) ** 2 - (x - 0.5) ** 2) - 0.25 * z)

    value, _ = quad.refine(lambda p: _nested(quad, f, p), relative=True)
    return math.log(value)


def log_phi(z: float, quad: Quadrature = DEFAULT_QUADRATURE) -> float:
    """Natural log of :func:`phi`, finite for arguments where ``phi`` overflows."""
    z = float(z)
    _check_z(z)
    if z > _LOG_DOMAIN_Z:
        return 0.25 * z + _log_phi_shifted(z, quad)
    return math.log1p(_phi_minus_one(z, quad))


def phi(z: float, quad: Quadrature = DEFAULT_QUADRATURE) -> float:
    """``2 int_0^1 exp(-z (x-1/2)^2) int_0^x exp(z (y-1/2)^2) dy dx``.

    Equals 1 at ``z = 0`` and increases with ``z``; ``sigma2 / phi(gamma)``
    is the long-run variance rate of the midprice.
    """
    z = float(z)
    _check_z(z)
    if z > _LOG_DOMAIN_Z:
        return math.exp(log_phi(z, quad))
    return 1.0 + _phi_minus_one(z, quad)


@lru_cache(maxsize=65536)
def _one_minus_psi(z: float, quad: Quadrature) -> float:
    if z == 0.0:
        return 0.0
    # symmetric about 1/2
    value, _ = quad.refine(
        lambda p: -2.0 * float(np.dot(*_psi_rule(quad, z, p))), relative=True
    )
    return value


def _psi_rule(quad, z, panels):
    ys, ws = quad.nodes(0.0, 0.5, panels)
    return ws, np.expm1(z * (ys * ys - ys))


def psi(z: float, quad: Quadrature = DEFAULT_QUADRATURE) -> float:
    """``int_0^1 exp(z y^2 - z y) dy``, the normalizer of :func:`chi`."""
    z = float(z)
    _check_z(z)
    return 1.0 - _one_minus_psi(z, quad)


def chi(gamma: float, x, quad: Quadrature = DEFAULT_QUADRATURE):
    """Stationary density of ``X mod 1``: ``exp(gamma x^2 - gamma x) / psi(gamma)``."""
    _check_z(float(gamma))
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("chi is defined on [0, 1]")
    out = np.exp(gamma * (x * x - x)) / psi(gamma, quad)
    return float(out) if out.ndim == 0 else out


def chi_tail_mass(gamma: float, eps: float, quad: Quadrature = DEFAULT_QUADRATURE) -> float:
    """Stationary probability that ``X mod 1`` lies within ``eps`` of an integer.

    This is ``int_{[0,1] minus [eps, 1-eps]} chi``, i.e. the long-run fraction
    of time the spread is two ticks wide.
    """
    if not 0.0 <= eps <= 0.5:
        raise ValueError("eps must lie in [0, 1/2]")
    if eps == 0.0:
        return 0.0
    g = float(gamma)
    head = quad.integrate(lambda x: np.exp(g * (x * x - x)), 0.0, eps)
    return 2.0 * head / psi(g, quad)


def big_sigma(params: ModelParams, quad: Quadrature = DEFAULT_QUADRATURE) -> float:
    """Long-run midprice variance rate ``sigma2 / phi(gamma)``."""
    return params.sigma2 * math.exp(-log_phi(params.gamma, quad))


def identifiability_ratio(z: float, quad: Quadrature = DEFAULT_QUADRATURE) -> float:
    """``(1 - 1/phi(z)) / (z (1/psi(z) - 1) phi(z))`` for ``z > 0``.

    Numerator and denominator both vanish like ``z**2`` at the origin, so the
    differences ``phi - 1`` and ``1 - psi`` are integrated directly (via
    ``expm1``) instead of being formed by subtraction.
    """
    z = float(z)
    if not (math.isfinite(z) and z > 0):
        raise ValueError(f"identifiability_ratio needs z > 0, got {z}")
    if z > _LOG_DOMAIN_Z:
        ph = phi(z, quad)
        pm = ph - 1.0
    else:
        pm = _phi_minus_one(z, quad)
        ph = 1.0 + pm
    om = _one_minus_psi(z, quad)
    ps = 1.0 - om
    return pm * ps / (z * om * ph * ph)
