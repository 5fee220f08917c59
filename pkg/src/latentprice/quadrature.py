"""Composite Gauss-Legendre quadrature with global panel refinement.

The integrands handled here (the special functions of the latent-price model)
are smooth on bounded intervals, so a fixed-order Gauss-Legendre rule on a
uniform panel partition converges spectrally. Refinement doubles the panel
count until two successive estimates agree to the requested tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when refinement stops before the tolerance is met."""

    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (achieved error estimate {error_estimate:.3e})")
        self.error_estimate = error_estimate


@lru_cache(maxsize=32)
def _legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True)
class Quadrature:
    """Adaptive composite Gauss-Legendre rule.

    Parameters
    ----------
    order : int
        Number of Gauss-Legendre nodes per panel.
    tol : float
        Target absolute tolerance between successive refinements.
    min_panels, max_panels : int
        Starting panel count and the refinement ceiling.
    """

    order: int = 16
    tol: float = 1e-10
    min_panels: int = 2
    max_panels: int = 4096

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("order must be >= 2")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        _, w = _legendre(self.order)
        assert np.all(w > 0)

    def nodes(self, a: float, b: float, panels: int) -> tuple[np.ndarray, np.ndarray]:
        """Abscissas and weights of the composite rule on ``[a, b]``."""
        x, w = _legendre(self.order)
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        xs = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        ws = (half[:, None] * w[None, :]).ravel()
        return xs, ws

    def refine(
        self, estimate: Callable[[int], float], relative: bool = False
    ) -> tuple[float, float]:
        """Double the panel count until ``estimate(panels)`` settles.

        ``estimate`` maps a panel count to an integral estimate; this lets
        nested integrals share one refinement loop. With ``relative=True`` the
        tolerance is applied relative to the estimate, which matters for
        quantities that are themselves tiny (e.g. ``phi(z) - 1`` near 0).
        """
        panels = self.min_panels
        prev = estimate(panels)
        err = np.inf
        while panels < self.max_panels:
            panels *= 2
            cur = estimate(panels)
            err = abs(cur - prev)
            scale = abs(cur) if relative else max(1.0, abs(cur))
            if err <= self.tol * scale or err == 0.0:
                return cur, err
            prev = cur
        raise QuadratureError(f"no convergence with {panels} panels", err)

    def integrate(self, f: Callable[[np.ndarray], np.ndarray], a: float, b: float) -> float:
        """Integrate a vectorized ``f`` over ``[a, b]``."""
        if a == b:
            return 0.0

        def est(panels):
            xs, ws = self.nodes(a, b, panels)
            return float(np.dot(ws, f(xs)))

        value, _ = self.refine(est)
        return value

    def check(self) -> float:
        """Integral of the constant 1 over [0, 1]; should be 1."""
        return self.integrate(lambda x: np.ones_like(x), 0.0, 1.0)


DEFAULT_QUADRATURE = Quadrature()
