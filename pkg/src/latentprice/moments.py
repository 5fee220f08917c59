"""Moment estimators: order-flow variance rate, midprice variance rate, spread half-width."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dataio import MarketPath
from .model import chi_tail_mass

EPS_MIN = 1e-4
EPS_TOL = 1e-6


def sqrt_rule(T: float) -> int:
    return max(1, int(math.floor(math.sqrt(T))))


@dataclass(frozen=True)
class SigmaHatConfig:
    """Number of blocks ``M`` for the midprice estimator.

    ``block_count_rule`` maps the horizon to ``M`` (default ``floor(sqrt(T))``);
    ``m_blocks`` overrides it.
    """

    block_count_rule: Callable[[float], int] = sqrt_rule
    m_blocks: Optional[int] = None

    def blocks(self, T: float, dt_obs: float = 1.0) -> int:
        m = self.m_blocks if self.m_blocks is not None else self.block_count_rule(T)
        if m < 1:
            raise ValueError(f"number of blocks must be >= 1, got {m}")
        if T / m < dt_obs - 1e-12:
            raise ValueError(f"{m} blocks over T={T} are shorter than the observation step {dt_obs}")
        return int(m)


def estimate_sigma_bar2(path: MarketPath) -> float:
    """Realized quadratic variation of the order flow per unit time."""
    if len(path) < 2:
        raise ValueError("need at least two observations")
    dy = np.diff(path.order_flow)
    return float(np.dot(dy, dy) / path.horizon)


def estimate_sigma_hat(path: MarketPath, cfg: SigmaHatConfig = SigmaHatConfig()) -> float:
    """Squared midprice increments over ``M`` blocks, divided by ``T``.

    Block ends ``k T / M`` are snapped to the nearest observation.
    """
    if len(path) < 2:
        raise ValueError("need at least two observations")
    T = path.horizon
    m = cfg.blocks(T, path.dt_obs)
    if m > len(path) - 1:
        raise ValueError(f"M={m} exceeds the {len(path) - 1} available increments")
    idx = np.rint(np.arange(m + 1) * (len(path) - 1) / m).astype(np.int64)
    mid = path.mid[idx]
    inc = np.diff(mid)
    return float(np.dot(inc, inc) / T)


def wide_spread_fraction(path: MarketPath) -> float:
    """Fraction of observation intervals that start with a two-tick spread."""
    if len(path) < 2:
        raise ValueError("need at least two observations")
    wide = (path.ask - path.bid)[:-1] >= 2
    return float(wide.mean())


def solve_epsilon(fraction: float, gamma: float, eps_min: float = EPS_MIN, tol: float = EPS_TOL) -> tuple[float, bool]:
    """Half-width whose stationary wide-spread probability equals ``fraction``.

    The stationary probability is increasing in ``eps``, so bisection on
    ``[eps_min, 1/2 - eps_min]`` finds the minimizer of the absolute gap.
    Returns ``(eps, clamped)``; ``clamped`` flags a boundary solution.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    lo, hi = eps_min, 0.5 - eps_min
    g = lambda e: chi_tail_mass(gamma, e) - fraction  # noqa: E731
    if g(lo) >= 0:
        return lo, True
    if g(hi) <= 0:
        return hi, True
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), False


def estimate_epsilon(path: MarketPath, gamma_hat: float) -> float:
    """Spread half-width matching the observed wide-spread time fraction."""
    eps, _ = solve_epsilon(wide_spread_fraction(path), gamma_hat)
    return eps
