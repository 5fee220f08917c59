"""Independent reference computations used to check the main code paths.

None of these share code with the quantities they verify:

* nested composite Simpson rules for ``phi`` and ``psi``;
* a bootstrap particle filter that works with the latent price ``X`` itself
  (not the transformed state), using the exact Gaussian law of an order-flow
  increment given the latent increment;
* a fine-grid conservative finite-volume solver for the transport-diffusion
  equation on the circle.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numba
import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .dataio import MarketPath
from .model import ModelParams


def _simpson_weights(n):
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def _simpson(f, a, b, n):
    x = np.linspace(a, b, n + 1)
    return (b - a) / n * np.dot(_simpson_weights(n), f(x))


def simpson_psi(z: float, n: int = 4000) -> float:
    """Composite Simpson with one Richardson step."""
    f = lambda y: np.exp(z * (y * y - y))  # noqa: E731
    s1 = _simpson(f, 0.0, 1.0, n)
    s2 = _simpson(f, 0.0, 1.0, 2 * n)
    return s2 + (s2 - s1) / 15.0


def _nested_simpson_phi(z, n):
    x = np.linspace(0.0, 1.0, n + 1)
    w = _simpson_weights(n)
    s = np.linspace(0.0, 1.0, n + 1)
    inner = np.empty(n + 1)
    for i, xi in enumerate(x):
        y = xi * s
        inner[i] = xi / n * np.dot(w, np.exp(z * ((y - 0.5) ** 2 - (xi - 0.5) ** 2)))
    return 2.0 / n * np.dot(w, inner)


def simpson_phi(z: float, n: int = 2000) -> float:
    """Nested composite Simpson for ``phi`` with one Richardson step."""
    s1 = _nested_simpson_phi(z, n)
    s2 = _nested_simpson_phi(z, 2 * n)
    return s2 + (s2 - s1) / 15.0


@numba.njit(cache=True)
def _pf_step(x, dy, alpha, drift, sig_sqdt, dt, noise, noise_var, u0, hist_bins, hist_out, do_hist, xnew, w):
    """Propagate, weight, summarize and resample.

    Returns the weighted drift and the log of the mean particle weight.
    """
    n = x.size
    substeps = noise.shape[1]
    lmax = -np.inf
    for p in range(n):
        xp = x[p]
        x0 = xp
        for k in range(substeps):
            xp += drift * (xp - math.floor(xp) - 0.5) * dt + sig_sqdt * noise[p, k]
        x[p] = xp
        r = dy - (xp - x0) / alpha
        lw = -0.5 * r * r / noise_var
        w[p] = lw
        if lw > lmax:
            lmax = lw
    tot = 0.0
    for p in range(n):
        w[p] = math.exp(w[p] - lmax)
        tot += w[p]
    log_mean_w = math.log(tot / n) + lmax
    m = 0.0
    for p in range(n):
        w[p] /= tot
        frac = x[p] - math.floor(x[p])
        m += w[p] * (frac - 0.5)
        if do_hist:
            k = int(frac * hist_bins)
            if k >= hist_bins:
                k = hist_bins - 1
            hist_out[k] += w[p]
    # systematic resampling
    cum = w[0]
    j = 0
    for p in range(n):
        target = (u0 + p) / n
        while cum < target and j < n - 1:
            j += 1
            cum += w[j]
        xnew[p] = x[j]
    x[:] = xnew
    return m, log_mean_w


class ParticleFilterResult(NamedTuple):
    """``mu[i]``: filtered micro-drift at observation ``i``; ``density[h]``:
    histogram density of ``X mod 1`` at the ``h``-th requested step;
    ``loglik_increments[i]``: log-likelihood ratio of increment ``i`` against
    driftless Brownian motion with variance rate ``sigma_bar2``."""

    mu: np.ndarray
    density: np.ndarray
    loglik_increments: np.ndarray


def bootstrap_particle_filter(
    path: MarketPath,
    params: ModelParams,
    n_particles: int = 100_000,
    dt_sim: float = 0.02,
    seed: int = 0,
    hist_steps=(),
    hist_bins: int = 100,
):
    """Filtered ``E[mu(X_t) | Y_0..Y_t]`` at every observation by particles.

    Particles start uniform on one cell (the same prior as the grid filter)
    and follow the latent dynamics with Euler steps of ``dt_sim``. Given the
    latent increment, an order-flow increment is Gaussian with mean
    ``dX / alpha`` and variance ``(sigma_bar2 - sigma2/alpha^2) dt``, which
    gives the weights.

    Returns the drift series, for each step in ``hist_steps`` a histogram
    (density) of ``X mod 1`` on ``hist_bins`` bins, and the per-increment
    log-likelihood ratios (a consistent estimate of the exact likelihood of
    the discretely observed order flow).
    """
    dt_obs = path.dt_obs
    substeps = int(round(dt_obs / dt_sim))
    rng = np.random.Generator(np.random.Philox(seed))
    x = rng.random(n_particles)
    dys = np.diff(path.order_flow)
    mu = np.empty(dys.size + 1)
    mu[0] = np.mean(x - 0.5)
    loglik = np.empty(dys.size)
    steps = sorted(int(k) for k in hist_steps)
    hist = np.zeros((max(len(steps), 1), hist_bins))
    xnew = np.empty(n_particles)
    w = np.empty(n_particles)
    noise = np.empty((n_particles, substeps))
    noise_var = params.flow_noise_var * dt_obs
    sig_sqdt = params.sigma * math.sqrt(dt_sim)
    drift = params.alpha * params.beta
    for i, dy in enumerate(dys):
        rng.standard_normal(out=noise)
        h = steps.index(i + 1) if (i + 1) in steps else 0
        mu[i + 1], loglik[i] = _pf_step(x, dy, params.alpha, drift, sig_sqdt, dt_sim, noise, noise_var, rng.random(),
                             hist_bins, hist[h], (i + 1) in steps, xnew, w)
    hist = hist[: len(steps)]
    # density of each increment relative to driftless Brownian motion with variance sigma_bar2
    ref_var = params.sigma_bar2 * dt_obs
    loglik += 0.5 * dys**2 / ref_var - 0.5 * math.log(noise_var / ref_var)
    return ParticleFilterResult(mu, hist * hist_bins, loglik)


def fokker_planck_reference(u0, A2: float, C: float, kappa: float, y: float, dt: float,
                            n_fine: int = 2000, n_time: int = 2000) -> np.ndarray:
    """Solve ``u_t = A2/2 u_xx - (C mu(x + kappa y) u)_x`` on the unit circle.

    Finite volumes on ``n_fine`` cells with Crank-Nicolson in time. The face
    velocity is taken from the drift at the face; the flux is central, and
    the discontinuity of the drift lies on a face by construction of the
    interpolation below. ``u0`` is given on any cell-centered grid and is
    interpolated (periodic, linear) to the fine grid; the returned density
    is on the fine grid.
    """
    u0 = np.asarray(u0, dtype=float)
    m = u0.size
    h = 1.0 / n_fine
    xf = (np.arange(n_fine) + 0.5) * h
    xc = (np.arange(m) + 0.5) / m
    u = np.interp(xf, np.concatenate([[xc[-1] - 1], xc, [xc[0] + 1]]),
                  np.concatenate([[u0[-1]], u0, [u0[0]]]))
    faces = np.arange(n_fine + 1) * h  # face i sits between cells i-1 and i
    r = np.mod(faces + kappa * y, 1.0)
    vel = C * (r - 0.5)
    D = 0.5 * A2
    # flux F_i at face i: vel_i (u_{i-1} + u_i)/2 - D (u_i - u_{i-1}) / h
    # du_j/dt = -(F_{j+1} - F_j) / h
    rows, cols, vals = [], [], []
    for j in range(n_fine):
        jm, jp = (j - 1) % n_fine, (j + 1) % n_fine
        vf, vb = vel[j + 1], vel[j]
        rows += [j, j, j]
        cols += [jm, j, jp]
        vals += [
            (vb / 2 + D / h) / h,
            (-vf / 2 - 2 * D / h + vb / 2) / h,
            (-vf / 2 + D / h) / h,
        ]
    L = sparse.csc_matrix((vals, (rows, cols)), shape=(n_fine, n_fine))
    k = dt / n_time
    eye = sparse.identity(n_fine, format="csc")
    lu = splu((eye - 0.5 * k * L).tocsc())
    rhs_op = (eye + 0.5 * k * L).tocsr()
    for _ in range(n_time):
        u = lu.solve(rhs_op @ u)
    return u / (u.sum() * h)
