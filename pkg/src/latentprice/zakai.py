"""Grid filter for the latent price via operator splitting of the Zakai equation.

The filter tracks the conditional density of ``Xt = X - kappa Y`` modulo 1,
whose noise is independent of the order flow. One observation step of
length ``dt`` applies

* ``G1``: transport-diffusion. Mass at ``x`` is carried along the forward
  characteristic ``F(x) = eta + exp(C dt) (x - eta)``, where
  ``eta = (1/2 - kappa Y) mod 1`` is the repelling point of the drift, and
  stops at the attracting point ``eta + 1/2`` if it reaches it; the result is
  then smoothed with the wrapped Gaussian kernel of variance ``A2 dt``.
  The pull-back variant evaluates the smoothed density at the backward
  characteristic ``b(x) = eta + exp(-C dt) (x - eta)`` instead. It solves the
  advective rather than the conservative transport equation, so it misses
  the mass that piles up where the drift jumps; it is kept for comparison.
* ``G2``: observation update. Pointwise reweighting by
  ``exp(-beta^2 mu^2 dt / (2 sigma_bar2) + beta mu dY / sigma_bar2)`` with
  ``mu = mu(x + kappa Y)`` at the left end of the step.

The density is renormalized after each operator. The conditional micro-drift
``E[mu(X_t) | Y]`` is read off the normalized density and fed to the
likelihood.

All per-step work is written for a batch of parameter candidates sharing one
path, which is what the grid search needs; the single-candidate functions
are thin wrappers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numba
import numpy as np

from .dataio import MarketPath
from .model import ModelParams

# Instrumentation: kernel constructions and candidate-steps performed.
STATS = {"kernel_builds": 0, "candidate_steps": 0}

_METHODS = ("interp", "direct")
_TRANSPORT = ("forward", "pullback")
_SPLITTING = ("lie", "strang")


class FilterDiagnosticError(FloatingPointError):
    """Raised when the filter density stops being finite and positive."""

    def __init__(self, message, step=None, state=None):
        super().__init__(message)
        self.step = step
        self.state = state


@dataclass(frozen=True)
class FilterGrid:
    """Periodic grid on [0, 1) with cell centers ``(j + 1/2) dx``."""

    n_cells: int = 100

    def __post_init__(self):
        if self.n_cells < 8:
            raise ValueError("n_cells must be >= 8")

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) / self.n_cells


@dataclass
class FilterState:
    """Normalized density ``u`` (values at cell centers), time and order-flow level."""

    u: np.ndarray
    t: float = 0.0
    y: float = 0.0

    @property
    def mass(self) -> float:
        return float(self.u.sum() / self.u.size)


def uniform_state(grid: FilterGrid, t=0.0, y=0.0) -> FilterState:
    return FilterState(np.ones(grid.n_cells), t, y)


@dataclass(frozen=True)
class SplitCoefficients:
    """Coefficients of the split Zakai equation for ``Xt = X - kappa Y``."""

    A2: float
    C: float
    kappa: float

    @classmethod
    def from_params(cls, p: ModelParams) -> "SplitCoefficients":
        excess = p.alpha**2 * p.sigma_bar2 - p.sigma2
        return cls(
            A2=p.sigma2 * excess / (p.alpha**2 * p.sigma_bar2),
            C=p.beta * excess / (p.alpha * p.sigma_bar2),
            kappa=p.kappa,
        )


def _n_images(var: float) -> int:
    # images beyond 8.5 standard deviations carry < 1e-16 mass
    return int(math.ceil(8.5 * math.sqrt(var))) + 1


def wrapped_gaussian(d, var: float, n_images: int | None = None):
    """Density of ``N(0, var) mod 1`` at ``d`` by summing Gaussian images."""
    d = np.asarray(d, dtype=float)
    n = _n_images(var) if n_images is None else n_images
    shifts = np.arange(-n, n + 1, dtype=float)
    z = d[..., None] + shifts
    return np.exp(-0.5 * z * z / var).sum(axis=-1) / math.sqrt(2.0 * math.pi * var)


class WrappedGaussianKernel:
    """Transition kernel of ``A W mod 1`` over ``dt`` on a given grid.

    ``table[k]`` is the kernel at circle distance ``k dx``; it is normalized
    so ``table.sum() * dx == 1``. ``spectrum`` holds the eigenvalues of the
    corresponding circulant operator (including the ``dx`` factor).
    """

    def __init__(self, A2: float, dt: float, grid: FilterGrid):
        var = A2 * dt
        if not var >= 1e-12:
            raise ValueError(f"A2*dt = {var:.3e} is below 1e-12; kernel would alias")
        STATS["kernel_builds"] += 1
        self.var = var
        self.grid = grid
        self.n_images = _n_images(var)
        table = wrapped_gaussian(np.arange(grid.n_cells) * grid.dx, var, self.n_images)
        self.table = table / (table.sum() * grid.dx)
        self.spectrum = np.fft.rfft(self.table) * grid.dx

    def __call__(self, d):
        """Kernel at arbitrary (circle) distance ``d``, without the table renormalization."""
        return wrapped_gaussian(d, self.var, self.n_images)

    def matrix(self) -> np.ndarray:
        """Dense circulant ``K[j, k] = table[|j - k| on the circle]``."""
        n = self.grid.n_cells
        idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
        return self.table[idx]


def circle_distance(a, b):
    r = np.mod(np.asarray(a) - np.asarray(b), 1.0)
    return np.minimum(r, 1.0 - r)


def _cell_offsets(x, kappa, y):
    """``mu(x + kappa y)`` broadcast over candidates (rows) and cells (columns)."""
    r = np.mod(x + kappa * y, 1.0)
    return np.where(r >= 1.0, 0.0, r) - 0.5


def _cell_mean_offsets(n, kappa, y):
    """Cell averages of ``mu(x + kappa y)``; the midpoint value except in the cell holding the jump."""
    dx = 1.0 / n
    lo = np.mod(np.arange(n) * dx + kappa * y, 1.0)
    lo = np.where(lo >= 1.0, 0.0, lo)
    over = np.maximum(lo + dx - 1.0, 0.0)
    return np.where(over > 0, (lo * (1.0 - lo) - over * (1.0 - over)) / (2.0 * dx), lo + 0.5 * dx - 0.5)


def _backward_points(d, kappa, y, contraction):
    eta = np.mod(0.5 - kappa * y, 1.0)
    return np.mod(eta + contraction * d, 1.0)


def _forward_points(d, kappa, y, expansion):
    """End points of the drift flow; offsets saturate at the attracting point."""
    eta = np.mod(0.5 - kappa * y, 1.0)
    return np.mod(eta + np.clip(expansion * d, -0.5, 0.5), 1.0)


def _deposit_linear(mass, q, n):
    """Spread ``mass`` located at ``q`` onto the two nearest cell centers."""
    p = q * n - 0.5
    i0 = np.floor(p)
    t = p - i0
    i0 = i0.astype(np.intp) % n
    out = np.zeros(mass.shape)
    rows = np.broadcast_to(np.arange(mass.shape[0])[:, None], mass.shape)
    np.add.at(out, (rows, i0), mass * (1.0 - t))
    np.add.at(out, (rows, (i0 + 1) % n), mass * t)
    return out


def _interp_periodic(g, q, n):
    """Cubic Lagrange interpolation of cell-centered periodic ``g`` at ``q``.

    Falls back to linear interpolation wherever the cubic value is negative,
    so positive inputs stay positive.
    """
    p = q * n - 0.5
    i0 = np.floor(p)
    t = p - i0
    i0 = i0.astype(np.intp) % n
    im = (i0 - 1) % n
    i1 = (i0 + 1) % n
    i2 = (i0 + 2) % n
    gm = np.take_along_axis(g, im, axis=1)
    g0 = np.take_along_axis(g, i0, axis=1)
    g1 = np.take_along_axis(g, i1, axis=1)
    g2 = np.take_along_axis(g, i2, axis=1)
    tm1 = t - 1.0
    tm2 = t - 2.0
    tp1 = t + 1.0
    v = (-t * tm1 * tm2 / 6.0) * gm + (tp1 * tm1 * tm2 / 2.0) * g0 \
        - (tp1 * t * tm2 / 2.0) * g1 + (tp1 * t * tm1 / 6.0) * g2
    neg = v < 0
    if neg.any():
        lin = (1.0 - t) * g0 + t * g1
        v = np.where(neg, lin, v)
    return v


@numba.njit(cache=True)
def _frac(v):
    r = v - math.floor(v)
    return 0.0 if r >= 1.0 else r


@numba.njit(cache=True)
def _cell_mean_drift(j, dx, shift):
    """Average of ``mu(x + shift)`` over cell ``j``, exact also for the cell holding the jump."""
    lo = j * dx + shift
    lo -= math.floor(lo)
    if lo + dx <= 1.0:
        return lo + 0.5 * dx - 0.5
    over = lo + dx - 1.0
    return (lo * (1.0 - lo) - over * (1.0 - over)) / (2.0 * dx)


@numba.njit(cache=True)
def _fused_step(g, kappa, contraction, quad, lin, y, y_next, dy, dt, frac, u_out, logz_out, mu_out):
    """Interpolate the smoothed density along the characteristics, reweight,
    normalize and read off the conditional drift, one candidate per row."""
    n_cand, n = g.shape
    dx = 1.0 / n
    d = np.empty(n)
    v = np.empty(n)
    e = np.empty(n)
    gp = np.empty(n + 4)
    for c in range(n_cand):
        # padded copy: gp[k + 2] = g[k mod n] for k in [-2, n + 1]
        gp[0] = g[c, n - 2]
        gp[1] = g[c, n - 1]
        for k in range(n):
            gp[k + 2] = g[c, k]
        gp[n + 2] = g[c, 0]
        gp[n + 3] = g[c, 1]
        kap = kappa[c]
        con = contraction[c]
        eta = _frac(0.5 - kap * y)
        shift = _frac(kap * y)
        mass = 0.0
        for j in range(n):
            r = (j + 0.5) * dx + shift
            if r >= 1.0:
                r -= 1.0
            dj = r - 0.5
            d[j] = dj
            q = eta + con * dj
            if q < 0.0:
                q += 1.0
            elif q >= 1.0:
                q -= 1.0
            p = q * n - 0.5
            fl = math.floor(p)
            t = p - fl
            i = int(fl) + 2
            gm = gp[i - 1]
            g0 = gp[i]
            g1 = gp[i + 1]
            g2 = gp[i + 2]
            tm1 = t - 1.0
            tm2 = t - 2.0
            tp1 = t + 1.0
            val = (-t * tm1 * tm2 / 6.0) * gm + (tp1 * tm1 * tm2 / 2.0) * g0 \
                - (tp1 * t * tm2 / 2.0) * g1 + (tp1 * t * tm1 / 6.0) * g2
            if val < 0.0:
                val = (1.0 - t) * g0 + t * g1
            v[j] = val
            mass += val
        scale = 1.0 / (mass * dx)
        a = frac * quad[c] * dt
        b = frac * lin[c] * dy
        emax = -np.inf
        for j in range(n):
            ej = (a * d[j] + b) * d[j]
            e[j] = ej
            if ej > emax:
                emax = ej
        z = 0.0
        for j in range(n):
            w = v[j] * math.exp(e[j] - emax)
            v[j] = w
            z += w
        z *= scale * dx
        logz_out[c] = math.log(z) + emax
        norm = scale / z
        shift = _frac(kap * y_next)
        m = 0.0
        for j in range(n):
            uj = v[j] * norm
            u_out[c, j] = uj
            m += _cell_mean_drift(j, dx, shift) * uj
        mu_out[c] = m * dx


@numba.njit(cache=True)
def _deposit(u, kappa, expansion, y, out):
    """Push every cell along the drift flow and spread it linearly, one candidate per row."""
    n_cand, n = u.shape
    dx = 1.0 / n
    for c in range(n_cand):
        for j in range(n):
            out[c, j] = 0.0
        kap = kappa[c]
        ex = expansion[c]
        eta = _frac(0.5 - kap * y)
        shift = _frac(kap * y)
        for j in range(n):
            r = (j + 0.5) * dx + shift
            if r >= 1.0:
                r -= 1.0
            dn = ex * (r - 0.5)
            if dn > 0.5:
                dn = 0.5
            elif dn < -0.5:
                dn = -0.5
            q = eta + dn
            if q < 0.0:
                q += 1.0
            elif q >= 1.0:
                q -= 1.0
            p = q * n - 0.5
            fl = math.floor(p)
            t = p - fl
            i = int(fl)
            if i < 0:
                i += n
            i1 = i + 1
            if i1 >= n:
                i1 -= n
            out[c, i] += u[c, j] * (1.0 - t)
            out[c, i1] += u[c, j] * t


@numba.njit(cache=True)
def _observe_step(g, kappa, quad, lin, y, y_next, dy, dt, frac, u_out, logz_out, mu_out):
    """Reweight, normalize and read off the conditional drift, one candidate per row."""
    n_cand, n = g.shape
    dx = 1.0 / n
    d = np.empty(n)
    e = np.empty(n)
    for c in range(n_cand):
        kap = kappa[c]
        shift = _frac(kap * y)
        mass = 0.0
        for j in range(n):
            r = (j + 0.5) * dx + shift
            if r >= 1.0:
                r -= 1.0
            d[j] = r - 0.5
            if g[c, j] < 0.0:
                g[c, j] = 0.0
            mass += g[c, j]
        scale = 1.0 / (mass * dx)
        a = frac * quad[c] * dt
        b = frac * lin[c] * dy
        emax = -np.inf
        for j in range(n):
            ej = (a * d[j] + b) * d[j]
            e[j] = ej
            if ej > emax:
                emax = ej
        z = 0.0
        for j in range(n):
            w = g[c, j] * math.exp(e[j] - emax)
            u_out[c, j] = w
            z += w
        z *= scale * dx
        logz_out[c] = math.log(z) + emax
        norm = scale / z
        shift = _frac(kap * y_next)
        m = 0.0
        for j in range(n):
            uj = u_out[c, j] * norm
            u_out[c, j] = uj
            m += _cell_mean_drift(j, dx, shift) * uj
        mu_out[c] = m * dx


class _Batch:
    """Per-candidate constants for a set of parameter vectors on one grid."""

    def __init__(self, params: Sequence[ModelParams], grid: FilterGrid, dt: float):
        self.grid = grid
        self.dt = dt
        self.params = list(params)
        coeffs = [SplitCoefficients.from_params(p) for p in self.params]
        col = lambda v: np.array(v, dtype=float)[:, None]  # noqa: E731
        self.kappa = col([c.kappa for c in coeffs])
        self.contraction = col([math.exp(-c.C * dt) for c in coeffs])
        self.expansion = col([math.exp(c.C * dt) for c in coeffs])
        beta = np.array([p.beta for p in self.params])
        sb2 = np.array([p.sigma_bar2 for p in self.params])
        self.quad = col(-0.5 * beta**2 / sb2)  # coefficient of mu^2 dt
        self.lin = col(beta / sb2)  # coefficient of mu dY
        self.kernels = [WrappedGaussianKernel(c.A2, dt, grid) for c in coeffs]
        self.spectrum = np.stack([k.spectrum for k in self.kernels])
        self.var = col([k.var for k in self.kernels])[:, :, None]
        self.n_images = max(k.n_images for k in self.kernels)

    def __len__(self):
        return len(self.params)

    def transport(self, u, d, y, method, transport="forward"):
        n = self.grid.n_cells
        x = self.grid.centers
        if transport == "forward":
            q = _forward_points(d, self.kappa, y, self.expansion)
            if method == "interp":
                m = _deposit_linear(u, q, n)
                v = np.fft.irfft(np.fft.rfft(m, axis=1) * self.spectrum, n=n, axis=1)
                v = np.maximum(v, 0.0)
            else:
                # v_j = sum_k K(x_j - F(x_k)) u_k dx
                dist = circle_distance(x[None, :, None], q[:, None, :])
                v = np.einsum("cjk,ck->cj", self._kernel_at(dist), u) * self.grid.dx
        else:
            b = _backward_points(d, self.kappa, y, self.contraction)
            if method == "interp":
                g = np.fft.irfft(np.fft.rfft(u, axis=1) * self.spectrum, n=n, axis=1)
                v = _interp_periodic(g, b, n)
            else:
                dist = circle_distance(x[None, None, :], b[:, :, None])
                v = np.einsum("cjk,ck->cj", self._kernel_at(dist), u) * self.grid.dx
        return v / (v.sum(axis=1, keepdims=True) * self.grid.dx)

    def _kernel_at(self, dist):
        shifts = np.arange(-self.n_images, self.n_images + 1, dtype=float)
        z = dist[..., None] + shifts
        k = np.exp(-0.5 * z * z / self.var[..., None]).sum(axis=-1)
        return k / np.sqrt(2.0 * math.pi * self.var)

    def observe(self, u, d, dy, frac=1.0):
        """Observation weights; returns the normalized density and log normalizers."""
        e = frac * (self.quad * d * d * self.dt + self.lin * d * dy)
        emax = e.max(axis=1, keepdims=True)
        v = u * np.exp(e - emax)
        z = v.sum(axis=1, keepdims=True) * self.grid.dx
        return v / z, (np.log(z) + emax)[:, 0]

    def conditional_mu(self, u, y):
        d = _cell_mean_offsets(self.grid.n_cells, self.kappa, y)
        return (d * u).sum(axis=1) * self.grid.dx

    def step(self, u, y, dy, method="interp", splitting="lie", transport="forward"):
        """Advance every candidate by one step.

        Returns the new densities, the log normalizers of the observation
        update and the conditional drift at the new order-flow level.
        """
        STATS["candidate_steps"] += len(self)
        logz = np.zeros(len(self))
        if method == "interp":
            frac = 1.0
            if splitting == "strang":
                d = _cell_offsets(self.grid.centers[None, :], self.kappa, y)
                u, logz = self.observe(u, d, dy, 0.5)
                frac = 0.5
            n = self.grid.n_cells
            out = np.empty_like(u)
            logz2 = np.empty(len(self))
            mu = np.empty(len(self))
            if transport == "forward":
                m = np.empty_like(u)
                _deposit(u, self.kappa[:, 0], self.expansion[:, 0], y, m)
                g = np.fft.irfft(np.fft.rfft(m, axis=1) * self.spectrum, n=n, axis=1)
                _observe_step(g, self.kappa[:, 0], self.quad[:, 0], self.lin[:, 0],
                              y, y + dy, dy, self.dt, frac, out, logz2, mu)
            else:
                g = np.fft.irfft(np.fft.rfft(u, axis=1) * self.spectrum, n=n, axis=1)
                _fused_step(g, self.kappa[:, 0], self.contraction[:, 0], self.quad[:, 0], self.lin[:, 0],
                            y, y + dy, dy, self.dt, frac, out, logz2, mu)
            return out, logz + logz2, mu
        d = _cell_offsets(self.grid.centers[None, :], self.kappa, y)
        if splitting == "lie":
            v = self.transport(u, d, y, method, transport)
            v, logz = self.observe(v, d, dy)
        else:
            v, logz1 = self.observe(u, d, dy, 0.5)
            v = self.transport(v, d, y, method, transport)
            v, logz2 = self.observe(v, d, dy, 0.5)
            logz = logz1 + logz2
        return v, logz, self.conditional_mu(v, y + dy)


def _check_options(method, splitting, transport="forward"):
    if method not in _METHODS:
        raise ValueError(f"method must be one of {_METHODS}")
    if transport not in _TRANSPORT:
        raise ValueError(f"transport must be one of {_TRANSPORT}")
    if splitting not in _SPLITTING:
        raise ValueError(f"splitting must be one of {_SPLITTING}")


def apply_transport_diffusion(
    state: FilterState,
    coeffs: SplitCoefficients,
    kernel: WrappedGaussianKernel,
    dt: float,
    method: str = "direct",
    transport: str = "forward",
) -> FilterState:
    """Apply ``G1`` over one step of length ``dt``.

    With ``transport="forward"`` the cell masses move along the drift flow
    (stopping at the attracting point) and are then smoothed by the kernel;
    ``method="direct"`` sums ``K(x_j - F(x_k)) u_k dx`` exactly, while
    ``"interp"`` spreads each mass linearly onto the grid and convolves by
    FFT. With ``transport="pullback"`` the density is smoothed first and
    evaluated at ``b(x_j)``, directly or by periodic cubic interpolation.
    """
    _check_options(method, "lie", transport)
    grid = kernel.grid
    x = grid.centers
    d = _cell_offsets(x, coeffs.kappa, state.y)
    if transport == "forward":
        q = _forward_points(d, coeffs.kappa, state.y, math.exp(coeffs.C * dt))
        if method == "direct":
            v = kernel(circle_distance(x[:, None], q[None, :])) @ state.u * grid.dx
        else:
            m = _deposit_linear(state.u[None, :], q[None, :], grid.n_cells)[0]
            v = np.maximum(np.fft.irfft(np.fft.rfft(m) * kernel.spectrum, n=grid.n_cells), 0.0)
    else:
        b = _backward_points(d, coeffs.kappa, state.y, math.exp(-coeffs.C * dt))
        if method == "direct":
            v = kernel(circle_distance(x[None, :], b[:, None])) @ state.u * grid.dx
        else:
            g = np.fft.irfft(np.fft.rfft(state.u) * kernel.spectrum, n=grid.n_cells)
            v = _interp_periodic(g[None, :], b[None, :], grid.n_cells)[0]
    v = v / (v.sum() * grid.dx)
    return FilterState(v, state.t, state.y)


def observation_weights(params: ModelParams, grid: FilterGrid, y: float, dt: float, dy: float):
    d = _cell_offsets(grid.centers, params.kappa, y)
    return np.exp(-0.5 * params.beta**2 / params.sigma_bar2 * d * d * dt + params.beta / params.sigma_bar2 * d * dy)


def apply_observation_update(
    state: FilterState, params: ModelParams, dt: float, dy: float, grid: FilterGrid | None = None
) -> tuple[FilterState, float]:
    """Apply ``G2``; returns the renormalized state and the log normalizer.

    The weight at cell ``x`` uses ``mu(x + kappa Y)`` with ``Y`` the level at
    the start of the step.
    """
    if params.beta == 0:
        return FilterState(state.u.copy(), state.t, state.y), 0.0
    grid = grid or FilterGrid(state.u.size)
    d = _cell_offsets(grid.centers, params.kappa, state.y)
    e = -0.5 * params.beta**2 / params.sigma_bar2 * d * d * dt + params.beta / params.sigma_bar2 * d * dy
    emax = e.max()
    v = state.u * np.exp(e - emax)
    z = v.sum() * grid.dx
    if not (z > 0 and math.isfinite(z)):
        raise FilterDiagnosticError("density vanished in observation update", state=state)
    return FilterState(v / z, state.t, state.y), float(math.log(z) + emax)


def conditional_mu(state: FilterState, kappa: float, grid: FilterGrid | None = None) -> float:
    """Filtered micro-drift of the latent price, ``sum_j mu_j u_j dx``.

    ``mu_j`` is the average of ``mu(kappa y + x)`` over cell ``j``. It equals
    the midpoint value except in the one cell that straddles the jump of the
    sawtooth, where the midpoint rule would leave an ``O(dx)`` bias (a uniform
    density would report a nonzero drift).
    """
    grid = grid or FilterGrid(state.u.size)
    d = _cell_mean_offsets(grid.n_cells, kappa, state.y)
    return float((d * state.u).sum() * grid.dx)


def filter_step(
    state: FilterState,
    params: ModelParams,
    dy: float,
    dt: float = 1.0,
    kernel: WrappedGaussianKernel | None = None,
    method: str = "direct",
    splitting: str = "lie",
    transport: str = "forward",
) -> tuple[FilterState, float, float]:
    """One composite step ``G2 o G1`` (or Strang ``G2/2 o G1 o G2/2``).

    Returns the new state (time and order flow advanced), the conditional
    micro-drift at the new time and the log normalizer of the observation
    update.
    """
    _check_options(method, splitting, transport)
    grid = kernel.grid if kernel is not None else FilterGrid(state.u.size)
    coeffs = SplitCoefficients.from_params(params)
    if kernel is None:
        kernel = WrappedGaussianKernel(coeffs.A2, dt, grid)
    if splitting == "lie":
        s = apply_transport_diffusion(state, coeffs, kernel, dt, method, transport)
        s, logz = apply_observation_update(s, params, dt, dy, grid)
    else:
        s, l1 = apply_observation_update(state, params, 0.5 * dt, 0.5 * dy, grid)
        s = apply_transport_diffusion(s, coeffs, kernel, dt, method, transport)
        s, l2 = apply_observation_update(s, params, 0.5 * dt, 0.5 * dy, grid)
        logz = l1 + l2
    new = FilterState(s.u, state.t + dt, state.y + dy)
    STATS["candidate_steps"] += 1
    return new, conditional_mu(new, params.kappa, grid), logz


class FilterOutput(NamedTuple):
    """``mu[i]`` is the filtered micro-drift at observation ``i``;
    ``loglik_increments[i]`` the likelihood term of interval ``i``;
    ``log_normalizers[i]`` the log mass of the unnormalized update."""

    mu: np.ndarray
    loglik_increments: np.ndarray
    log_normalizers: np.ndarray


def _prior_matrix(prior, grid, n_cand):
    if prior is None:
        return np.ones((n_cand, grid.n_cells))
    u = np.asarray(prior, dtype=float)
    if u.shape != (grid.n_cells,) or np.any(u < 0) or not u.sum() > 0:
        raise ValueError("prior must be a nonnegative array of length n_cells")
    u = u / (u.sum() * grid.dx)
    return np.tile(u, (n_cand, 1))


def _check_path(path: MarketPath, dt: float):
    if len(path) < 2:
        raise ValueError("path needs at least two observations")
    steps = np.diff(path.times)
    if not np.allclose(steps, dt, rtol=0, atol=1e-9 * max(1.0, dt)):
        raise ValueError(f"path spacing must equal the filter step {dt}")


@dataclass
class BatchResult:
    loglik: np.ndarray
    loglik_unnormalized: np.ndarray
    mu: np.ndarray | None = None
    log_normalizers: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def run_batch(
    path: MarketPath,
    params: Sequence[ModelParams],
    grid: FilterGrid | None = None,
    dt: float = 1.0,
    prior=None,
    method: str = "interp",
    splitting: str = "lie",
    transport: str = "forward",
    record: bool = False,
) -> BatchResult:
    """Run one filter per candidate over ``path`` and accumulate log-likelihoods.

    ``loglik`` is the Riemann-sum likelihood built from the filtered
    micro-drift; ``loglik_unnormalized`` is the sum of log normalizers of the
    observation updates (the unnormalized-density route).
    """
    _check_options(method, splitting, transport)
    _check_path(path, dt)
    grid = grid or FilterGrid()
    batch = _Batch(params, grid, dt)
    u = _prior_matrix(prior, grid, len(batch))
    y_all = path.order_flow
    dys = np.diff(y_all)
    n = dys.size
    ll = np.zeros(len(batch))
    ll_un = np.zeros(len(batch))
    mu_prev = batch.conditional_mu(u, y_all[0])
    mus = logzs = None
    if record:
        mus = np.empty((len(batch), n + 1))
        logzs = np.empty((len(batch), n))
        mus[:, 0] = mu_prev
    quad, lin = batch.quad[:, 0], batch.lin[:, 0]
    for i in range(n):
        dy = dys[i]
        ll += quad * mu_prev * mu_prev * dt + lin * mu_prev * dy
        u, logz, mu_next = batch.step(u, y_all[i], dy, method, splitting, transport)
        if not np.all(np.isfinite(logz)):
            bad = int(np.flatnonzero(~np.isfinite(logz))[0])
            raise FilterDiagnosticError(
                f"non-finite density at step {i} for candidate {batch.params[bad]}",
                step=i,
                state=FilterState(u[bad].copy(), path.times[i + 1], y_all[i + 1]),
            )
        ll_un += logz
        mu_prev = mu_next
        if record:
            mus[:, i + 1] = mu_prev
            logzs[:, i] = logz
    return BatchResult(ll, ll_un, mus, logzs, {"kernel_builds": len(batch.kernels), "steps": n})


def run_filter(
    path: MarketPath,
    params: ModelParams,
    grid: FilterGrid | None = None,
    dt: float = 1.0,
    prior=None,
    method: str = "interp",
    splitting: str = "lie",
    transport: str = "forward",
) -> FilterOutput:
    """Filter ``path`` under ``params`` from ``prior`` (uniform by default)."""
    res = run_batch(path, [params], grid, dt, prior, method, splitting, transport, record=True)
    mu = res.mu[0]
    dys = np.diff(path.order_flow)
    inc = -0.5 * params.beta**2 / params.sigma_bar2 * mu[:-1] ** 2 * dt + params.beta / params.sigma_bar2 * mu[:-1] * dys
    return FilterOutput(mu, inc, res.log_normalizers[0])
