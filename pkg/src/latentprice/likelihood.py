"""Log-likelihood of the order flow, beta inversion and grid-search MLE."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .dataio import MarketPath
from .model import ModelParams, log_phi
from .zakai import FilterDiagnosticError, FilterGrid, run_batch, run_filter

logger = logging.getLogger(__name__)

_GAMMA_RTOL = 1e-10


def loglik_from_mu(mu, dy, beta: float, sigma_bar2: float, dt: float = 1.0) -> float:
    """Riemann-sum log-likelihood from filtered drifts ``mu[i]`` and increments ``dy[i]``.

    ``-beta^2/(2 sigma_bar2) sum mu^2 dt + beta/sigma_bar2 sum mu dy``.
    """
    mu = np.asarray(mu, dtype=float)
    dy = np.asarray(dy, dtype=float)
    if mu.shape != dy.shape:
        raise ValueError("mu and dy must have the same length")
    if beta == 0:
        return 0.0
    return float(-0.5 * beta**2 / sigma_bar2 * np.dot(mu, mu) * dt + beta / sigma_bar2 * np.dot(mu, dy))


def log_likelihood(path: MarketPath, params: ModelParams, grid: FilterGrid | None = None, **filter_opts) -> float:
    """Log-likelihood of ``path`` under ``params`` via the grid filter."""
    if params.beta == 0:
        return 0.0
    try:
        out = run_filter(path, params, grid, **filter_opts)
    except FilterDiagnosticError as exc:
        raise FilterDiagnosticError(f"{exc} [candidate {params}]", exc.step, exc.state) from exc
    return float(out.loglik_increments.sum())


@lru_cache(maxsize=4096)
def phi_inverse(ratio: float) -> float:
    """``gamma >= 0`` with ``phi(gamma) = ratio`` (``ratio >= 1``)."""
    if ratio < 1.0:
        raise ValueError("phi takes values >= 1")
    if ratio == 1.0:
        return 0.0
    target = math.log(ratio)
    f = lambda g: log_phi(g) - target  # noqa: E731
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError(f"cannot bracket phi^-1({ratio})")
    return brentq(f, 0.0 if hi == 1.0 else hi / 2.0, hi, xtol=1e-300, rtol=_GAMMA_RTOL)


def invert_beta(alpha2: float, sigma2: float, sigma_bar2: float, Sigma_hat: float) -> Optional[float]:
    """``beta`` solving ``sigma2 / phi(alpha beta / sigma2) = Sigma_hat``.

    Returns ``None`` when no admissible parameter exists (``sigma2 < Sigma_hat``
    or ``sigma2 >= alpha2 * sigma_bar2``); ``sigma2 == Sigma_hat`` gives the
    boundary value 0.
    """
    if not (alpha2 > 0 and sigma2 > 0 and Sigma_hat > 0 and sigma_bar2 > 0):
        raise ValueError("alpha2, sigma2, sigma_bar2 and Sigma_hat must be positive")
    if sigma2 < Sigma_hat or sigma2 >= alpha2 * sigma_bar2:
        return None
    gamma = phi_inverse(sigma2 / Sigma_hat)
    return gamma * sigma2 / math.sqrt(alpha2)


@dataclass
class ParamGrid:
    """Finite candidate set on which the likelihood is maximized.

    Each candidate is ``(alpha2, sigma2, beta)`` with ``beta`` implied by the
    moment condition ``Sigma(theta) = Sigma_hat``. Pairs without a positive
    admissible ``beta`` are dropped and counted in ``excluded``.
    """

    sigma_bar2: float
    Sigma_hat: float
    candidates: list = field(default_factory=list)
    excluded: int = 0
    alpha2_axis: Optional[np.ndarray] = None
    sigma2_axis: Optional[np.ndarray] = None

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]], sigma_bar2: float, Sigma_hat: float, **axes) -> "ParamGrid":
        cands, excluded = [], 0
        for a2, s2 in pairs:
            beta = invert_beta(a2, s2, sigma_bar2, Sigma_hat)
            if beta is None or beta <= 0:
                excluded += 1
                continue
            cands.append((float(a2), float(s2), float(beta)))
        return cls(sigma_bar2, Sigma_hat, cands, excluded, **axes)

    @classmethod
    def rectangular(cls, alpha2_axis, sigma2_axis, sigma_bar2: float, Sigma_hat: float) -> "ParamGrid":
        a = np.asarray(alpha2_axis, dtype=float)
        s = np.asarray(sigma2_axis, dtype=float)
        pairs = [(ai, si) for ai in a for si in s]
        return cls.from_pairs(pairs, sigma_bar2, Sigma_hat, alpha2_axis=a, sigma2_axis=s)

    @classmethod
    def default(cls, sigma_bar2: float, Sigma_hat: float, n_alpha2: int = 100, n_sigma2: int = 100,
                alpha2_span: float = 10.0) -> "ParamGrid":
        """Rectangle derived from the data.

        ``alpha2`` runs over ``[1.02, alpha2_span] * Sigma_hat / sigma_bar2`` and
        ``sigma2`` over ``[1.01 Sigma_hat, 0.99 alpha2_max sigma_bar2]``.
        """
        a_lo = 1.02 * Sigma_hat / sigma_bar2
        a_hi = alpha2_span * Sigma_hat / sigma_bar2
        s_lo = 1.01 * Sigma_hat
        s_hi = 0.99 * a_hi * sigma_bar2
        return cls.rectangular(np.linspace(a_lo, a_hi, n_alpha2), np.linspace(s_lo, s_hi, n_sigma2), sigma_bar2, Sigma_hat)

    def __len__(self):
        return len(self.candidates)

    def params(self, eps: float = 0.0) -> list[ModelParams]:
        return [ModelParams.from_alpha2(a2, b, s2, self.sigma_bar2, eps) for a2, s2, b in self.candidates]


@dataclass
class MleResult:
    theta_hat: ModelParams
    loglik_surface: np.ndarray  # rows (alpha2, sigma2, beta, loglik), lexicographic in (alpha2, sigma2)
    ties: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def max_loglik(self) -> float:
        return float(self.loglik_surface[:, 3].max())


def _evaluate_chunk(args):
    path, params, filter_grid, opts, route = args
    res = run_batch(path, params, filter_grid, **opts)
    ll = res.loglik if route == "normalized" else res.loglik_unnormalized
    return ll, res.diagnostics["kernel_builds"], res.loglik, res.loglik_unnormalized


def evaluate_candidates(
    path: MarketPath,
    params: Sequence[ModelParams],
    filter_grid: FilterGrid | None = None,
    workers: int = 1,
    chunk_size: int = 1000,
    route: str = "normalized",
    **opts,
) -> tuple[np.ndarray, dict]:
    """Log-likelihoods of many candidates; kernels are built once per candidate."""
    if route not in ("normalized", "unnormalized"):
        raise ValueError("route must be 'normalized' or 'unnormalized'")
    chunks = [list(params[i : i + chunk_size]) for i in range(0, len(params), chunk_size)]
    jobs = [(path, c, filter_grid, opts, route) for c in chunks]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(_evaluate_chunk, jobs))
    else:
        outs = [_evaluate_chunk(j) for j in jobs]
    ll = np.concatenate([o[0] for o in outs]) if outs else np.empty(0)
    diag = {
        "kernel_builds": int(sum(o[1] for o in outs)),
        "loglik_normalized": np.concatenate([o[2] for o in outs]) if outs else np.empty(0),
        "loglik_unnormalized": np.concatenate([o[3] for o in outs]) if outs else np.empty(0),
    }
    return ll, diag


def grid_search_mle(
    path: MarketPath,
    grid: ParamGrid,
    filter_grid: FilterGrid | None = None,
    workers: int = 1,
    chunk_size: int = 1000,
    route: str = "normalized",
    **opts,
) -> MleResult:
    """Exhaustive maximization of the log-likelihood over ``grid``.

    Ties are broken toward the lexicographically smallest ``(alpha2, sigma2)``
    and all co-maximizers are reported.
    """
    if len(grid) == 0:
        raise ValueError(f"parameter grid has no admissible candidates ({grid.excluded} excluded)")
    t0 = time.perf_counter()
    order = sorted(range(len(grid)), key=lambda i: grid.candidates[i][:2])
    cands = [grid.candidates[i] for i in order]
    params = [ModelParams.from_alpha2(a2, b, s2, grid.sigma_bar2) for a2, s2, b in cands]
    ll, diag = evaluate_candidates(path, params, filter_grid, workers, chunk_size, route, **opts)
    surface = np.column_stack([np.array(cands, dtype=float).reshape(-1, 3), ll])
    best = float(np.max(ll))
    winners = np.flatnonzero(ll == best)
    ties = [tuple(surface[i, :3]) for i in winners]
    runtime = time.perf_counter() - t0
    logger.info("grid search: %d candidates, %d excluded, %.1fs", len(params), grid.excluded, runtime)
    diagnostics = {
        "excluded": grid.excluded,
        "evaluated": len(params),
        "runtime_s": runtime,
        "kernel_builds": diag["kernel_builds"],
        "steps": len(path) - 1,
        "route": route,
        "loglik_normalized": diag["loglik_normalized"],
        "loglik_unnormalized": diag["loglik_unnormalized"],
    }
    return MleResult(params[int(winners[0])], surface, ties, diagnostics)
