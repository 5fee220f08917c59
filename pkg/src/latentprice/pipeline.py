"""End-to-end estimation of one session: moments, grid search, spread half-width."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataio import EstimationResult, MarketPath
from .likelihood import MleResult, ParamGrid, grid_search_mle
from .moments import SigmaHatConfig, estimate_sigma_bar2, estimate_sigma_hat, solve_epsilon, wide_spread_fraction
from .zakai import FilterGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AxisSpec:
    """Equidistant axis ``lo, lo + h, ..., hi`` with ``n`` points."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("axis needs at least one point")
        if self.n > 1 and not self.hi > self.lo:
            raise ValueError(f"axis upper bound {self.hi} must exceed lower bound {self.lo}")

    @classmethod
    def parse(cls, text: str) -> "AxisSpec":
        """Read ``min:max:n``."""
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"axis must be min:max:n, got {text!r}")
        return cls(float(parts[0]), float(parts[1]), int(parts[2]))

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def __str__(self):
        return f"{self.lo!r}:{self.hi!r}:{self.n}"


def build_grid(sigma_bar2: float, Sigma_hat: float, alpha2: Optional[AxisSpec] = None,
               sigma2: Optional[AxisSpec] = None) -> ParamGrid:
    """Candidate grid; missing axes fall back to the data-driven defaults."""
    default = ParamGrid.default(sigma_bar2, Sigma_hat)
    a = alpha2.values() if alpha2 is not None else default.alpha2_axis
    s = sigma2.values() if sigma2 is not None else default.sigma2_axis
    if alpha2 is None and sigma2 is None:
        return default
    return ParamGrid.rectangular(a, s, sigma_bar2, Sigma_hat)


def estimate_session(
    path: MarketPath,
    alpha2: Optional[AxisSpec] = None,
    sigma2: Optional[AxisSpec] = None,
    m_blocks: Optional[int] = None,
    filter_grid: FilterGrid | None = None,
    workers: int = 1,
    meta: Optional[dict] = None,
    **filter_opts,
) -> tuple[EstimationResult, MleResult]:
    """Run the whole estimator on one gridded session.

    ``sigma_bar2`` comes from the realized variance of the order flow,
    ``Sigma_hat`` from block midprice increments, ``(alpha2, sigma2)`` from
    the grid search with ``beta`` tied to ``Sigma_hat``, and the spread
    half-width from the wide-spread fraction given the fitted ``gamma``.
    """
    t0 = time.perf_counter()
    sb2 = estimate_sigma_bar2(path)
    cfg = SigmaHatConfig(m_blocks=m_blocks)
    m = cfg.blocks(path.horizon, path.dt_obs)
    Sig = estimate_sigma_hat(path, cfg)
    grid = build_grid(sb2, Sig, alpha2, sigma2)
    logger.info("sigma_bar2=%.6g Sigma_hat=%.6g, %d candidates (%d excluded)", sb2, Sig, len(grid), grid.excluded)
    mle = grid_search_mle(path, grid, filter_grid, workers=workers, **filter_opts)
    th = mle.theta_hat
    eps, clamped = solve_epsilon(wide_spread_fraction(path), th.gamma)
    info = dict(meta or {})
    info.update(
        n_candidates=len(grid),
        excluded=grid.excluded,
        kernel_builds=mle.diagnostics["kernel_builds"],
        runtime_s=round(time.perf_counter() - t0, 3),
    )
    result = EstimationResult(
        sigma_bar2=sb2,
        Sigma_hat=Sig,
        alpha=th.alpha,
        beta=th.beta,
        sigma2=th.sigma2,
        eps=eps,
        eps_clamped=clamped,
        m_blocks=m,
        surface=mle.loglik_surface,
        ties=mle.ties,
        meta=info,
    )
    return result, mle
